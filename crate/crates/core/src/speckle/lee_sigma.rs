//! Improved Lee Sigma filter.
//!
//! 1. Point targets (above the scene percentile, with enough bright 3×3
//!    neighbours) pass through unchanged.
//! 2. A 3×3 Lee estimate serves as the prior `x̂`.
//! 3. Window pixels within `x̂·(1 ± ξ·Cu·k)` are selected, where `k` is the
//!    two-sided standard normal quantile for coverage `ξ`.
//! 4. The Lee estimate over the selected pixels is the output; with fewer
//!    than three selected pixels the prior is used.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Result, StarError};
use crate::raster::{check_radius, par_map_pixels, window_bounds, window_moments, RasterGrid};
use crate::scalar::Scalar;
use crate::speckle::{lee_estimate, SpeckleParams};

/// `k` with `P(|Z| ≤ k) = ξ` for standard normal `Z`.
pub fn sigma_range_quantile(xi: f64) -> Result<f64> {
    if !(xi > 0.0 && xi < 1.0) {
        return Err(StarError::param(format!("sigma_xi must lie in (0, 1), got {xi}")));
    }
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(n.inverse_cdf(0.5 * (1.0 + xi)))
}

/// Nearest-rank percentile of the valid samples.
fn percentile<T: Scalar>(grid: &RasterGrid<T>, pct: f64) -> Option<T> {
    let mut v: Vec<T> = grid.valid_values().collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    let rank = ((pct / 100.0) * v.len() as f64).ceil() as usize;
    Some(v[rank.clamp(1, v.len()) - 1])
}

pub fn lee_sigma<T: Scalar>(grid: &RasterGrid<T>, params: &SpeckleParams) -> Result<RasterGrid<T>> {
    params.validate()?;
    check_radius(grid, params.radius)?;
    let k = sigma_range_quantile(params.sigma_xi)?;
    let cu2 = params.cu2::<T>();
    let half_band = T::lit(params.sigma_xi * k) * cu2.sqrt();
    let Some(bright) = percentile(grid, params.target_percentile) else {
        return Ok(grid.clone());
    };
    let w = grid.width();
    let h = grid.height();
    let vals = grid.values();
    let ok = grid.valid();
    let r = params.radius;

    let (values, valid) = par_map_pixels(w, h, |col, row| {
        let i = row * w + col;
        if !ok[i] {
            return None;
        }
        let p = vals[i];

        if p > bright {
            let (x0, x1) = window_bounds(col, 1, w);
            let (y0, y1) = window_bounds(row, 1, h);
            let mut neighbours = 0usize;
            for y in y0..y1 {
                for x in x0..x1 {
                    let j = y * w + x;
                    if j != i && ok[j] && vals[j] > bright {
                        neighbours += 1;
                    }
                }
            }
            if neighbours >= params.target_min_neighbors {
                return Some(p);
            }
        }

        let (m3, v3, n3) = window_moments(grid, col, row, 1);
        let prior = if n3 >= 2 { lee_estimate(m3, v3, p, cu2) } else { p };
        let lo = prior * (T::one() - half_band);
        let hi = prior * (T::one() + half_band);

        let (x0, x1) = window_bounds(col, r, w);
        let (y0, y1) = window_bounds(row, r, h);
        let mut sum = T::zero();
        let mut n = 0usize;
        for y in y0..y1 {
            for x in x0..x1 {
                let j = y * w + x;
                if ok[j] && vals[j] >= lo && vals[j] <= hi {
                    sum = sum + vals[j];
                    n += 1;
                }
            }
        }
        if n < 3 {
            return Some(prior);
        }
        let m = sum / T::from_count(n);
        let mut ss = T::zero();
        for y in y0..y1 {
            for x in x0..x1 {
                let j = y * w + x;
                if ok[j] && vals[j] >= lo && vals[j] <= hi {
                    let d = vals[j] - m;
                    ss = ss + d * d;
                }
            }
        }
        Some(lee_estimate(m, ss / T::from_count(n), p, cu2))
    });
    Ok(grid.derive(values, valid, grid.units()))
}
