use crate::error::Result;
use crate::raster::{focal_stats, par_map_pixels, RasterGrid};
use crate::scalar::Scalar;
use crate::speckle::SpeckleParams;

/// MMSE weight `W = max(0, (v − m²Cu²)/(1 + Cu²)) / v`, clamped to [0, 1].
/// Zero-variance windows give `W = 0`.
#[inline]
pub fn lee_weight<T: Scalar>(mean: T, variance: T, cu2: T) -> T {
    if !(variance > T::zero()) {
        return T::zero();
    }
    let var_x = ((variance - mean * mean * cu2) / (T::one() + cu2)).max(T::zero());
    (var_x / variance).max(T::zero()).min(T::one())
}

/// `m + W·(p − m)`.
#[inline]
pub fn lee_estimate<T: Scalar>(mean: T, variance: T, pixel: T, cu2: T) -> T {
    mean + lee_weight(mean, variance, cu2) * (pixel - mean)
}

/// Lee filter over the `(2r+1)²` window.
pub fn lee<T: Scalar>(grid: &RasterGrid<T>, params: &SpeckleParams) -> Result<RasterGrid<T>> {
    params.validate()?;
    let stats = focal_stats(grid, params.radius)?;
    let cu2 = params.cu2::<T>();
    let w = grid.width();
    let (values, valid) = par_map_pixels(w, grid.height(), |col, row| {
        let i = row * w + col;
        if !stats.mean.is_valid(i) {
            return None;
        }
        Some(lee_estimate(stats.mean.values()[i], stats.variance.values()[i], grid.values()[i], cu2))
    });
    Ok(grid.derive(values, valid, grid.units()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{GeoTransform, GridSpec, Units};
    use proptest::prelude::*;

    fn grid(w: usize, h: usize, v: Vec<f64>) -> RasterGrid<f64> {
        RasterGrid::new(GridSpec::new(w, h, GeoTransform::north_up(0.0, 0.0, 10.0), "EPSG:32632"), v, Units::Linear).unwrap()
    }

    /// Scalar oracle for the MMSE estimate, written out term by term.
    fn oracle(window: &[f64], p: f64, looks: f64) -> f64 {
        let n = window.len() as f64;
        let m = window.iter().sum::<f64>() / n;
        let v = window.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
        let cu2 = 1.0 / looks;
        let var_x = ((v - m * m * cu2) / (1.0 + cu2)).max(0.0);
        let w = if v > 0.0 { (var_x / v).clamp(0.0, 1.0) } else { 0.0 };
        m + w * (p - m)
    }

    #[test]
    fn zero_variance_returns_mean() {
        let g = grid(5, 5, vec![3.0; 25]);
        let out = lee(&g, &SpeckleParams::new(1.0, 1).unwrap()).unwrap();
        assert!(out.valid_values().all(|v| v == 3.0));
    }

    #[test]
    fn one_to_nine_window() {
        let vals: Vec<f64> = (1..=9).map(f64::from).collect();
        let g = grid(3, 3, vals.clone());
        let out = lee(&g, &SpeckleParams::new(1.0, 1).unwrap()).unwrap();
        // v = 20/3, m = 5, var_x = max(0, (20/3 - 25)/2) = 0
        assert_eq!(oracle(&vals, 5.0, 1.0), 5.0);
        assert_eq!(out.get(1, 1), Some(5.0));
    }

    #[test]
    fn strong_edge_follows_oracle() {
        // one bright column in a dark field: large local variance
        let mut v = vec![1.0; 49];
        for row in 0..7 {
            v[row * 7 + 3] = 1.0e4;
        }
        let g = grid(7, 7, v.clone());
        let looks = 4.0;
        let out = lee(&g, &SpeckleParams::new(looks, 1).unwrap()).unwrap();
        for (col, row) in [(3usize, 3usize), (2, 3), (4, 1)] {
            let mut win = Vec::new();
            for y in row - 1..=row + 1 {
                for x in col - 1..=col + 1 {
                    win.push(v[y * 7 + x]);
                }
            }
            let expect = oracle(&win, v[row * 7 + col], looks);
            assert!((out.get(col, row).unwrap() - expect).abs() <= 1e-9 * expect.abs());
        }
        // as v grows the weight tends to 1/(1 + Cu²)
        let w = lee_weight(1.0, 1.0e12, 1.0 / looks);
        assert!((w - 1.0 / (1.0 + 1.0 / looks)).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn weight_in_unit_interval(m in 0.0f64..100.0, v in 0.0f64..1e4, looks in 0.5f64..50.0) {
            let w = lee_weight(m, v, 1.0 / looks);
            prop_assert!((0.0..=1.0).contains(&w));
        }
    }
}
