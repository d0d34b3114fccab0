//! Decibel/linear conversion and the two pre-filter masks: border noise by
//! incidence angle, and extreme backscatter values.

use serde::{Deserialize, Serialize};

use crate::error::{Result, StarError};
use crate::raster::{RasterGrid, Units};
use crate::scalar::Scalar;

/// Accepted incidence-angle band in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleRange {
    min_deg: f64,
    max_deg: f64,
}

impl AngleRange {
    pub fn new(min_deg: f64, max_deg: f64) -> Result<Self> {
        if !(0.0 < min_deg && min_deg < max_deg && max_deg < 90.0) {
            return Err(StarError::param(format!(
                "angle range must satisfy 0 < min < max < 90, got [{min_deg}, {max_deg}]"
            )));
        }
        Ok(AngleRange { min_deg, max_deg })
    }

    pub fn min_deg(&self) -> f64 {
        self.min_deg
    }

    pub fn max_deg(&self) -> f64 {
        self.max_deg
    }

    #[inline]
    pub fn contains(&self, deg: f64) -> bool {
        deg >= self.min_deg && deg <= self.max_deg
    }
}

impl Default for AngleRange {
    /// The IW swath incidence band, 31° to 46°.
    fn default() -> Self {
        AngleRange {
            min_deg: 31.0,
            max_deg: 46.0,
        }
    }
}

/// Accepted backscatter band in dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DbRange {
    min_db: f64,
    max_db: f64,
}

impl DbRange {
    pub fn new(min_db: f64, max_db: f64) -> Result<Self> {
        if !(min_db < max_db) || !min_db.is_finite() || !max_db.is_finite() {
            return Err(StarError::param(format!(
                "dB range must satisfy min < max, got [{min_db}, {max_db}]"
            )));
        }
        Ok(DbRange { min_db, max_db })
    }

    pub fn min_db(&self) -> f64 {
        self.min_db
    }

    pub fn max_db(&self) -> f64 {
        self.max_db
    }

    #[inline]
    pub fn contains(&self, db: f64) -> bool {
        db >= self.min_db && db <= self.max_db
    }
}

impl Default for DbRange {
    fn default() -> Self {
        DbRange {
            min_db: -30.0,
            max_db: 15.0,
        }
    }
}

/// `10·log10(x)`; non-positive samples become invalid.
pub fn to_db<T: Scalar>(grid: &RasterGrid<T>) -> Result<RasterGrid<T>> {
    grid.require_units("to_db", &[Units::Linear])?;
    let ten = T::lit(10.0);
    Ok(grid.map_valid(Units::Db, |v| (v > T::zero()).then(|| ten * v.log10())))
}

/// `10^(x/10)`.
pub fn to_linear<T: Scalar>(grid: &RasterGrid<T>) -> Result<RasterGrid<T>> {
    grid.require_units("to_linear", &[Units::Db])?;
    let ten = T::lit(10.0);
    Ok(grid.map_valid(Units::Linear, |v| Some(ten.powf(v / ten))))
}

/// Invalidates pixels whose incidence angle is outside `range` or missing.
pub fn mask_border_angle<T: Scalar>(grid: &RasterGrid<T>, angle: &RasterGrid<T>, range: AngleRange) -> Result<RasterGrid<T>> {
    grid.check_aligned(angle, "angle band")?;
    angle.require_units("mask_border_angle", &[Units::Degrees])?;
    let keep: Vec<bool> = angle
        .values()
        .iter()
        .zip(angle.valid())
        .map(|(a, ok)| *ok && range.contains(a.as_f64()))
        .collect();
    Ok(grid.masked_by(&keep))
}

/// Invalidates dB samples outside `range`.
pub fn mask_extremes<T: Scalar>(grid: &RasterGrid<T>, range: DbRange) -> Result<RasterGrid<T>> {
    grid.require_units("mask_extremes", &[Units::Db])?;
    let keep: Vec<bool> = grid
        .values()
        .iter()
        .zip(grid.valid())
        .map(|(v, ok)| *ok && range.contains(v.as_f64()))
        .collect();
    Ok(grid.masked_by(&keep))
}
