//! Windowed neighbourhood operations with shrink-to-valid edges: pixels
//! outside the grid or flagged invalid are dropped from the window and the
//! statistic is taken over what remains. Nothing is mirrored or wrapped.

use rayon::prelude::*;

use crate::error::{Result, StarError};
use crate::raster::{Kernel, RasterGrid, Units};
use crate::scalar::Scalar;

/// Evaluates `f(col, row)` for every pixel in parallel over rows. `None`
/// marks the output pixel invalid.
pub(crate) fn par_map_pixels<T, F>(width: usize, height: usize, f: F) -> (Vec<T>, Vec<bool>)
where
    T: Scalar,
    F: Fn(usize, usize) -> Option<T> + Sync,
{
    let mut values = vec![T::nan(); width * height];
    let mut valid = vec![false; width * height];
    if width == 0 {
        return (values, valid);
    }
    values
        .par_chunks_mut(width)
        .zip(valid.par_chunks_mut(width))
        .enumerate()
        .for_each(|(row, (vals, oks))| {
            for col in 0..width {
                if let Some(v) = f(col, row) {
                    if v.is_finite() {
                        vals[col] = v;
                        oks[col] = true;
                    }
                }
            }
        });
    (values, valid)
}

/// Clipped window bounds `[lo, hi)` around `c` in an axis of length `n`.
#[inline]
pub(crate) fn window_bounds(c: usize, radius: usize, n: usize) -> (usize, usize) {
    (c.saturating_sub(radius), (c + radius + 1).min(n))
}

/// Mean and population variance of the valid pixels in the square window of
/// `radius` centred on (col, row). Returns `(mean, variance, count)`.
#[inline]
pub(crate) fn window_moments<T: Scalar>(grid: &RasterGrid<T>, col: usize, row: usize, radius: usize) -> (T, T, usize) {
    let w = grid.width();
    let (x0, x1) = window_bounds(col, radius, w);
    let (y0, y1) = window_bounds(row, radius, grid.height());
    let vals = grid.values();
    let ok = grid.valid();
    let mut sum = T::zero();
    let mut n = 0usize;
    for y in y0..y1 {
        let base = y * w;
        for x in x0..x1 {
            if ok[base + x] {
                sum = sum + vals[base + x];
                n += 1;
            }
        }
    }
    if n == 0 {
        return (T::nan(), T::nan(), 0);
    }
    let mean = sum / T::from_count(n);
    let mut ss = T::zero();
    for y in y0..y1 {
        let base = y * w;
        for x in x0..x1 {
            if ok[base + x] {
                let d = vals[base + x] - mean;
                ss = ss + d * d;
            }
        }
    }
    (mean, ss / T::from_count(n), n)
}

pub(crate) fn check_radius<T: Scalar>(grid: &RasterGrid<T>, radius: usize) -> Result<()> {
    if radius < 1 {
        return Err(StarError::param("window radius must be at least 1"));
    }
    let limit = grid.width().min(grid.height());
    if 2 * radius > limit {
        return Err(StarError::param(format!(
            "window radius {radius} exceeds half the smaller grid dimension ({limit})"
        )));
    }
    Ok(())
}

/// Per-pixel local mean and population variance.
#[derive(Debug, Clone)]
pub struct FocalStats<T> {
    pub mean: RasterGrid<T>,
    pub variance: RasterGrid<T>,
}

/// Local mean and population variance over the `(2r+1)²` window. An output
/// pixel is valid when its centre is valid and at least two valid pixels
/// fall inside the window.
pub fn focal_stats<T: Scalar>(grid: &RasterGrid<T>, radius: usize) -> Result<FocalStats<T>> {
    grid.require_units("focal_stats", &[Units::Linear])?;
    check_radius(grid, radius)?;
    let w = grid.width();
    let h = grid.height();
    let ok = grid.valid();
    let mut means = vec![T::nan(); w * h];
    let mut vars = vec![T::nan(); w * h];
    let mut valid = vec![false; w * h];
    if w > 0 {
        means
            .par_chunks_mut(w)
            .zip(vars.par_chunks_mut(w))
            .zip(valid.par_chunks_mut(w))
            .enumerate()
            .for_each(|(row, ((m_row, v_row), ok_row))| {
                for col in 0..w {
                    if !ok[row * w + col] {
                        continue;
                    }
                    let (m, v, n) = window_moments(grid, col, row, radius);
                    if n >= 2 {
                        m_row[col] = m;
                        v_row[col] = v;
                        ok_row[col] = true;
                    }
                }
            });
    }
    Ok(FocalStats {
        mean: grid.derive(means, valid.clone(), grid.units()),
        variance: grid.derive(vars, valid, grid.units()),
    })
}

/// Weighted sum of valid pixels under `kernel`. For normalized kernels the
/// weights are renormalized over the valid, in-bounds subset at each
/// location. The output is invalid where the centre is invalid or no
/// weighted valid pixel remains.
pub fn convolve<T: Scalar>(grid: &RasterGrid<T>, kernel: &Kernel<T>) -> Result<RasterGrid<T>> {
    grid.require_units("convolve", &[Units::Db, Units::Linear])?;
    Ok(weighted_window(grid, kernel))
}

pub(crate) fn weighted_window<T: Scalar>(grid: &RasterGrid<T>, kernel: &Kernel<T>) -> RasterGrid<T> {
    let w = grid.width();
    let h = grid.height();
    let r = kernel.radius();
    let vals = grid.values();
    let ok = grid.valid();
    let (values, valid) = par_map_pixels(w, h, |col, row| {
        if !ok[row * w + col] {
            return None;
        }
        let (x0, x1) = window_bounds(col, r, w);
        let (y0, y1) = window_bounds(row, r, h);
        let mut acc = T::zero();
        let mut wsum = T::zero();
        let mut any = false;
        for y in y0..y1 {
            let dy = y as isize - row as isize;
            for x in x0..x1 {
                let i = y * w + x;
                if !ok[i] {
                    continue;
                }
                let wt = kernel.weight(x as isize - col as isize, dy);
                if wt == T::zero() {
                    continue;
                }
                acc = acc + wt * vals[i];
                wsum = wsum + wt;
                any = true;
            }
        }
        if !any {
            return None;
        }
        if kernel.is_normalized() {
            if wsum == T::zero() {
                return None;
            }
            Some(acc / wsum)
        } else {
            Some(acc)
        }
    });
    grid.derive(values, valid, grid.units())
}

/// Lower median of the valid pixels under the non-zero footprint of `kernel`.
pub(crate) fn focal_median<T: Scalar>(grid: &RasterGrid<T>, kernel: &Kernel<T>) -> RasterGrid<T> {
    let w = grid.width();
    let h = grid.height();
    let r = kernel.radius();
    let vals = grid.values();
    let ok = grid.valid();
    let (values, valid) = par_map_pixels(w, h, |col, row| {
        if !ok[row * w + col] {
            return None;
        }
        let (x0, x1) = window_bounds(col, r, w);
        let (y0, y1) = window_bounds(row, r, h);
        let mut buf: Vec<T> = Vec::with_capacity(kernel.weights().len());
        for y in y0..y1 {
            let dy = y as isize - row as isize;
            for x in x0..x1 {
                let i = y * w + x;
                if ok[i] && kernel.weight(x as isize - col as isize, dy) != T::zero() {
                    buf.push(vals[i]);
                }
            }
        }
        if buf.is_empty() {
            return None;
        }
        let k = (buf.len() - 1) / 2;
        let (_, m, _) = buf.select_nth_unstable_by(k, |a, b| a.partial_cmp(b).expect("finite samples"));
        Some(*m)
    });
    grid.derive(values, valid, grid.units())
}
