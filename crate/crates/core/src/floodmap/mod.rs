//! Otsu thresholding with chessboard cell selection, water masks and
//! flood-extent reporting.

mod histogram;
mod otsu;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Result, StarError};
use crate::objects::{filter_min_size, BinaryMask, Connectivity};
use crate::raster::{RasterGrid, Units};
use crate::scalar::Scalar;

pub use histogram::Histogram;
pub use otsu::{between_class_index_variance, chessboard_otsu, otsu, ChessboardParams, ChessboardResult, OtsuResult};

/// Threshold used when neither chessboard nor global Otsu succeeds.
pub const DEFAULT_FIXED_THRESHOLD_DB: f64 = -16.0;

/// `value < threshold`, with steep pixels (`exclude[i] == true`) forced to
/// dry, followed by removal of components smaller than `min_pixels`.
pub fn water_mask<T: Scalar>(
    grid: &RasterGrid<T>,
    threshold: T,
    exclude: Option<&[bool]>,
    conn: Connectivity,
    min_pixels: usize,
) -> Result<BinaryMask> {
    grid.require_units("water_mask", &[Units::Db])?;
    if let Some(ex) = exclude {
        if ex.len() != grid.len() {
            return Err(StarError::Alignment("exclusion mask does not match grid".into()));
        }
    }
    let set = (0..grid.len())
        .map(|i| grid.is_valid(i) && grid.values()[i] < threshold && !exclude.is_some_and(|e| e[i]))
        .collect();
    let raw = BinaryMask::new(grid.spec().clone(), set, grid.valid().to_vec())?;
    Ok(filter_min_size(&raw, conn, min_pixels))
}

/// Pixel counts and areas for pre-event (permanent) water, during-event water
/// and the flood extent `during ∧ ¬pre`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloodReport {
    pub date_pre: String,
    pub date_during: String,
    pub permanent_water_px: u64,
    pub during_water_px: u64,
    pub flood_px: u64,
    pub overlap_px: u64,
    pub permanent_km2: f64,
    pub during_km2: f64,
    pub flood_km2: f64,
    pub overlap_km2: f64,
    pub pixel_area_m2: f64,
}

pub const REPORT_COLUMNS: [&str; 8] = [
    "date_pre",
    "date_during",
    "px_permanent",
    "px_during",
    "px_flood",
    "km2_permanent",
    "km2_during",
    "km2_flood",
];

impl FloodReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", REPORT_COLUMNS.join(","))?;
        writeln!(
            out,
            "{},{},{},{},{},{:.6},{:.6},{:.6}",
            self.date_pre,
            self.date_during,
            self.permanent_water_px,
            self.during_water_px,
            self.flood_px,
            self.permanent_km2,
            self.during_km2,
            self.flood_km2
        )
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii csv")
    }
}

/// Flood extent as the set difference of two co-registered water masks.
pub fn flood_extent(
    pre: &BinaryMask,
    during: &BinaryMask,
    pixel_area_m2: f64,
    date_pre: impl Into<String>,
    date_during: impl Into<String>,
) -> Result<(FloodReport, BinaryMask)> {
    pre.check_aligned(during, "during-event mask")?;
    if !(pixel_area_m2 > 0.0 && pixel_area_m2.is_finite()) {
        return Err(StarError::param("pixel area must be positive"));
    }
    let flood_bits: Vec<bool> = pre.bits().iter().zip(during.bits()).map(|(p, d)| *d && !*p).collect();
    let valid: Vec<bool> = pre.valid().iter().zip(during.valid()).map(|(a, b)| *a || *b).collect();
    let count = |b: &[bool]| b.iter().filter(|x| **x).count() as u64;
    let permanent = pre.count() as u64;
    let during_px = during.count() as u64;
    let flood_px = count(&flood_bits);
    let overlap_px = during_px - flood_px;
    let km2 = |px: u64| px as f64 * pixel_area_m2 / 1e6;
    let report = FloodReport {
        date_pre: date_pre.into(),
        date_during: date_during.into(),
        permanent_water_px: permanent,
        during_water_px: during_px,
        flood_px,
        overlap_px,
        permanent_km2: km2(permanent),
        during_km2: km2(during_px),
        flood_km2: km2(flood_px),
        overlap_km2: km2(overlap_px),
        pixel_area_m2,
    };
    let mask = BinaryMask::new(pre.spec().clone(), flood_bits, valid)?;
    Ok((report, mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{GeoTransform, GridSpec};

    fn spec(w: usize, h: usize) -> GridSpec {
        GridSpec::new(w, h, GeoTransform::north_up(0.0, 0.0, 10.0), "EPSG:32632")
    }

    #[test]
    fn thresholding() {
        let g = RasterGrid::new(spec(3, 1), vec![-22.0, -10.0, -16.0], Units::Db).unwrap();
        let m = water_mask(&g, -16.0, None, Connectivity::Eight, 1).unwrap();
        assert_eq!(m.bits(), &[true, false, false]);
        let m = water_mask(&g, -16.0, Some(&[true, false, false]), Connectivity::Eight, 1).unwrap();
        assert_eq!(m.count(), 0);
        let lin = g.clone().with_units(Units::Linear);
        assert!(water_mask(&lin, -16.0, None, Connectivity::Eight, 1).is_err());
    }

    #[test]
    fn speck_removed() {
        let mut v = vec![-10.0; 100];
        for i in [11, 12, 13] {
            v[i] = -25.0;
        }
        let g = RasterGrid::new(spec(10, 10), v, Units::Db).unwrap();
        assert_eq!(water_mask(&g, -16.0, None, Connectivity::Eight, 8).unwrap().count(), 0);
        assert_eq!(water_mask(&g, -16.0, None, Connectivity::Eight, 3).unwrap().count(), 3);
    }

    #[test]
    fn extent_arithmetic() {
        let s = spec(20, 20);
        let pre: Vec<bool> = (0..400).map(|i| i < 100).collect();
        let during: Vec<bool> = (0..400).map(|i| i < 300).collect();
        let pre = BinaryMask::from_bits(s.clone(), pre).unwrap();
        let during = BinaryMask::from_bits(s, during).unwrap();
        let (r, m) = flood_extent(&pre, &during, 100.0, "2022-07-01", "2022-09-21").unwrap();
        assert_eq!((r.permanent_water_px, r.during_water_px, r.flood_px), (100, 300, 200));
        assert!((r.flood_km2 - 0.02).abs() < 1e-15);
        assert!((r.during_km2 - 0.03).abs() < 1e-15);
        assert_eq!(m.count(), 200);
        let (same, _) = flood_extent(&during, &during, 100.0, "a", "b").unwrap();
        assert_eq!(same.flood_px, 0);
        assert_eq!(same.flood_km2, 0.0);
    }

    #[test]
    fn csv_schema() {
        let s = spec(2, 1);
        let m = BinaryMask::from_bits(s, vec![true, false]).unwrap();
        let (r, _) = flood_extent(&m, &m, 100.0, "2022-07-01", "2022-09-21").unwrap();
        let csv = r.to_csv();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "date_pre,date_during,px_permanent,px_during,px_flood,km2_permanent,km2_during,km2_flood"
        );
        assert_eq!(lines.next().unwrap(), "2022-07-01,2022-09-21,1,1,0,0.000100,0.000100,0.000000");
    }
}
