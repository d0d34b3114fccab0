use serde::{Deserialize, Serialize};

use crate::error::{Result, StarError};
use crate::raster::focal::par_map_pixels;
use crate::raster::{GridSpec, RasterGrid};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResampleMethod {
    Nearest,
    Bilinear,
}

/// Fractional coordinates this close to a pixel centre snap onto it, so
/// resampling onto an identical lattice is exact.
const SNAP: f64 = 1e-9;

#[inline]
fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < SNAP {
        r
    } else {
        v
    }
}

/// Resamples `grid` onto `target`. Both must share a CRS; reprojection is
/// not supported. Pixels that map outside the source are invalid, and a
/// bilinear sample is invalid when any source pixel with non-zero weight is
/// invalid.
pub fn resample_to<T: Scalar>(grid: &RasterGrid<T>, target: &GridSpec, method: ResampleMethod) -> Result<RasterGrid<T>> {
    if grid.crs_id() != target.crs_id {
        return Err(StarError::UnsupportedProjection {
            source_crs: grid.crs_id().to_string(),
            target_crs: target.crs_id.clone(),
        });
    }
    target.transform.validate()?;
    let src_t = *grid.transform();
    let dst_t = target.transform;
    let (sw, sh) = (grid.width() as isize, grid.height() as isize);
    let vals = grid.values();
    let ok = grid.valid();
    let sample = |x: isize, y: isize| -> Option<T> {
        if x < 0 || y < 0 || x >= sw || y >= sh {
            return None;
        }
        let i = (y * sw + x) as usize;
        ok[i].then(|| vals[i])
    };

    let (values, valid) = par_map_pixels(target.width, target.height, |col, row| {
        let (wx, wy) = dst_t.pixel_center(col as f64, row as f64);
        let (fx, fy) = src_t.world_to_pixel(wx, wy);
        let (fx, fy) = (snap(fx), snap(fy));
        match method {
            ResampleMethod::Nearest => sample(fx.round() as isize, fy.round() as isize),
            ResampleMethod::Bilinear => {
                let x0 = fx.floor();
                let y0 = fy.floor();
                let tx = fx - x0;
                let ty = fy - y0;
                let (x0, y0) = (x0 as isize, y0 as isize);
                let taps = [
                    (x0, y0, (1.0 - tx) * (1.0 - ty)),
                    (x0 + 1, y0, tx * (1.0 - ty)),
                    (x0, y0 + 1, (1.0 - tx) * ty),
                    (x0 + 1, y0 + 1, tx * ty),
                ];
                let mut acc = T::zero();
                for (x, y, wt) in taps {
                    if wt == 0.0 {
                        continue;
                    }
                    acc = acc + sample(x, y)? * T::lit(wt);
                }
                Some(acc)
            }
        }
    });
    RasterGrid::with_mask(target.clone(), values, valid, grid.units())
}

/// Per-pixel area in m². Metric CRSs use the transform directly; geographic
/// CRSs need a (meters per degree x, meters per degree y) pair.
pub fn pixel_area_m2(spec: &GridSpec, meters_per_degree: Option<(f64, f64)>) -> Result<f64> {
    let t = &spec.transform;
    if is_geographic(&spec.crs_id) {
        let (mx, my) = meters_per_degree.ok_or_else(|| {
            StarError::param(format!(
                "{} is geographic; configure meters-per-degree to compute pixel areas",
                spec.crs_id
            ))
        })?;
        if !(mx > 0.0 && my > 0.0) {
            return Err(StarError::param("meters-per-degree factors must be positive"));
        }
        Ok((t.pixel_w * mx * t.pixel_h * my).abs())
    } else {
        Ok((t.pixel_w * t.pixel_h).abs())
    }
}

/// Known latitude/longitude CRS codes.
pub fn is_geographic(crs_id: &str) -> bool {
    matches!(
        crs_id.trim().to_ascii_uppercase().as_str(),
        "EPSG:4326" | "EPSG:4269" | "EPSG:4258" | "EPSG:4283" | "EPSG:4674" | "EPSG:4612" | "EPSG:4979" | "OGC:CRS84"
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{GeoTransform, Units};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec(w: usize, h: usize, t: GeoTransform) -> GridSpec {
        GridSpec::new(w, h, t, "EPSG:32632")
    }

    #[test]
    fn identity_nearest() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = spec(13, 7, GeoTransform::north_up(500_000.0, 4_000_000.0, 10.0));
        let g = RasterGrid::new(s.clone(), (0..91).map(|_| rng.gen::<f64>()).collect(), Units::Linear).unwrap();
        let out = resample_to(&g, &s, ResampleMethod::Nearest).unwrap();
        assert_eq!(out.values(), g.values());
        let again = resample_to(&out, &s, ResampleMethod::Nearest).unwrap();
        assert_eq!(again, out);
        let bil = resample_to(&g, &s, ResampleMethod::Bilinear).unwrap();
        assert_eq!(bil.values(), g.values());
    }

    #[test]
    fn bilinear_centre_of_two_by_two() {
        let t = GeoTransform::north_up(0.0, 20.0, 10.0);
        let g = RasterGrid::new(spec(2, 2, t), vec![0.0, 10.0, 20.0, 30.0], Units::Linear).unwrap();
        let target = spec(1, 1, GeoTransform::north_up(0.0, 20.0, 20.0));
        let out = resample_to(&g, &target, ResampleMethod::Bilinear).unwrap();
        assert_eq!(out.get(0, 0), Some(15.0));
    }

    #[test]
    fn half_pixel_shift_matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (w, h) = (20usize, 15usize);
        let v: Vec<f64> = (0..w * h).map(|_| rng.gen_range(0.0..5.0)).collect();
        let g = RasterGrid::new(spec(w, h, GeoTransform::north_up(0.0, 150.0, 10.0)), v.clone(), Units::Linear).unwrap();
        let target = spec(w - 1, h - 1, GeoTransform::north_up(5.0, 145.0, 10.0));
        let out = resample_to(&g, &target, ResampleMethod::Bilinear).unwrap();
        for row in 0..h - 1 {
            for col in 0..w - 1 {
                let at = |c: usize, r: usize| v[r * w + c];
                let expect = 0.25 * (at(col, row) + at(col + 1, row) + at(col, row + 1) + at(col + 1, row + 1));
                assert!((out.get(col, row).unwrap() - expect).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn bilinear_invalid_neighbour_poisons() {
        let t = GeoTransform::north_up(0.0, 20.0, 10.0);
        let g = RasterGrid::new(spec(2, 2, t), vec![0.0, f64::NAN, 20.0, 30.0], Units::Linear).unwrap();
        let target = spec(1, 1, GeoTransform::north_up(0.0, 20.0, 20.0));
        let out = resample_to(&g, &target, ResampleMethod::Bilinear).unwrap();
        assert_eq!(out.valid_count(), 0);
    }

    #[test]
    fn nearest_keeps_value_set() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v: Vec<f64> = (0..64).map(|_| rng.gen_range(0..5) as f64).collect();
        let g = RasterGrid::new(spec(8, 8, GeoTransform::north_up(0.0, 80.0, 10.0)), v.clone(), Units::Linear).unwrap();
        let target = spec(11, 9, GeoTransform::north_up(3.0, 77.0, 7.0));
        let out = resample_to(&g, &target, ResampleMethod::Nearest).unwrap();
        assert!(out.valid_values().all(|x| v.contains(&x)));
    }

    #[test]
    fn crs_mismatch_is_rejected() {
        let g = RasterGrid::filled(spec(2, 2, GeoTransform::north_up(0.0, 0.0, 1.0)), 1.0, Units::Db);
        let target = GridSpec::new(2, 2, GeoTransform::north_up(0.0, 0.0, 1.0), "EPSG:4326");
        let err = resample_to(&g, &target, ResampleMethod::Nearest).unwrap_err();
        assert!(err.to_string().contains("pre-project"));
    }

    #[test]
    fn areas() {
        let s = spec(1, 1, GeoTransform::north_up(0.0, 0.0, 10.0));
        assert_eq!(pixel_area_m2(&s, None).unwrap(), 100.0);
        let s = spec(1, 1, GeoTransform::north_up(0.0, 0.0, 1.0));
        assert_eq!(pixel_area_m2(&s, None).unwrap(), 1.0);
        let s = spec(1, 1, GeoTransform::new(0.0, 0.0, 10.0, -20.0).unwrap());
        assert_eq!(pixel_area_m2(&s, None).unwrap(), 200.0);
        let geo = GridSpec::new(1, 1, GeoTransform::north_up(0.0, 0.0, 0.0001), "EPSG:4326");
        assert!(pixel_area_m2(&geo, None).is_err());
        let a = pixel_area_m2(&geo, Some((111_320.0, 110_574.0))).unwrap();
        assert!((a - 11.132 * 11.0574).abs() < 1e-9);
    }
}
