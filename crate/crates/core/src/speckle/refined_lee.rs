//! Refined Lee: a Lee MMSE estimate computed over an edge-aligned half of a
//! 7×7 window. The half is picked from the nine 3×3 sub-window means that
//! tile the 7×7 window at a stride of two pixels.
//!
//! Sub-means are indexed row-major, `0..9`, with 4 at the centre. The four
//! gradient axes, in tie-break order, are vertical (1–7), horizontal (3–5),
//! diagonal (0–8) and anti-diagonal (6–2). Each axis gradient is the
//! difference of the three sub-means on either side of the line through the
//! centre. Along the strongest axis the half-window on the side whose
//! sub-mean is closer to the centre sub-mean is used; both halves include
//! the dividing line through the centre.

use crate::error::Result;
use crate::raster::{check_radius, par_map_pixels, window_moments, RasterGrid};
use crate::scalar::Scalar;
use crate::speckle::{lee_estimate, SpeckleParams};

const HALF: isize = 3;

/// (first side sub-mean, second side sub-mean) per axis.
const AXES: [(usize, usize); 4] = [(1, 7), (3, 5), (0, 8), (6, 2)];

/// Sub-means on the first and second side of each axis.
const SIDES: [([usize; 3], [usize; 3]); 4] = [
    ([0, 1, 2], [6, 7, 8]),
    ([0, 3, 6], [2, 5, 8]),
    ([0, 1, 3], [5, 7, 8]),
    ([3, 6, 7], [1, 2, 5]),
];

/// True when offset (dr, dc) lies in the half-window of `axis` on `side`
/// (0 = first sub-mean of the axis pair, 1 = second).
#[inline]
fn in_half(axis: usize, side: usize, dr: isize, dc: isize) -> bool {
    let s = match axis {
        0 => -dr,
        1 => -dc,
        2 => -(dr + dc),
        _ => dr - dc,
    };
    if side == 0 {
        s >= 0
    } else {
        s <= 0
    }
}

fn sub_means<T: Scalar>(grid: &RasterGrid<T>) -> Vec<Option<T>> {
    let w = grid.width();
    let (values, valid) = par_map_pixels(w, grid.height(), |col, row| {
        let (m, _, n) = window_moments(grid, col, row, 1);
        (n > 0).then_some(m)
    });
    values.into_iter().zip(valid).map(|(v, ok)| ok.then_some(v)).collect()
}

/// Edge-aligned direction at (col, row): `(axis, side)`, or `None` when no
/// axis has both sub-means available.
fn direction<T: Scalar>(means: &[Option<T>], w: usize, h: usize, col: usize, row: usize) -> Option<(usize, usize)> {
    let mut sample = [None; 9];
    for (k, slot) in sample.iter_mut().enumerate() {
        let r = row as isize + 2 * (k as isize / 3 - 1);
        let c = col as isize + 2 * (k as isize % 3 - 1);
        if r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < w {
            *slot = means[r as usize * w + c as usize];
        }
    }
    let centre = sample[4]?;
    let mut best: Option<(usize, T)> = None;
    let side_sum = |ks: &[usize; 3]| ks.iter().try_fold(T::zero(), |acc, &k| sample[k].map(|m| acc + m));
    for (axis, (first, second)) in SIDES.iter().enumerate() {
        if let (Some(sa), Some(sb)) = (side_sum(first), side_sum(second)) {
            let g = (sa - sb).abs();
            if best.is_none_or(|(_, bg)| g > bg) {
                best = Some((axis, g));
            }
        }
    }
    let (axis, _) = best?;
    let (a, b) = AXES[axis];
    let da = (sample[a]? - centre).abs();
    let db = (sample[b]? - centre).abs();
    Some((axis, if db < da { 1 } else { 0 }))
}

/// Refined Lee filter. Falls back to the 3×3 Lee estimate when the chosen
/// half-window holds fewer than three valid pixels.
pub fn refined_lee<T: Scalar>(grid: &RasterGrid<T>, params: &SpeckleParams) -> Result<RasterGrid<T>> {
    params.validate()?;
    check_radius(grid, HALF as usize)?;
    let w = grid.width();
    let h = grid.height();
    let vals = grid.values();
    let ok = grid.valid();
    let cu2 = params.cu2::<T>();
    let means = sub_means(grid);

    let prior = |col: usize, row: usize, p: T| {
        let (m, v, n) = window_moments(grid, col, row, 1);
        if n >= 2 {
            lee_estimate(m, v, p, cu2)
        } else {
            p
        }
    };

    let (values, valid) = par_map_pixels(w, h, |col, row| {
        let i = row * w + col;
        if !ok[i] {
            return None;
        }
        let p = vals[i];
        let Some((axis, side)) = direction(&means, w, h, col, row) else {
            return Some(prior(col, row, p));
        };
        let mut sum = T::zero();
        let mut n = 0usize;
        let mut members = [0usize; 49];
        for dr in -HALF..=HALF {
            let r = row as isize + dr;
            if r < 0 || r as usize >= h {
                continue;
            }
            for dc in -HALF..=HALF {
                let c = col as isize + dc;
                if c < 0 || c as usize >= w || !in_half(axis, side, dr, dc) {
                    continue;
                }
                let j = r as usize * w + c as usize;
                if ok[j] {
                    sum = sum + vals[j];
                    members[n] = j;
                    n += 1;
                }
            }
        }
        if n < 3 {
            return Some(prior(col, row, p));
        }
        let m = sum / T::from_count(n);
        let mut ss = T::zero();
        for &j in &members[..n] {
            let d = vals[j] - m;
            ss = ss + d * d;
        }
        let v = ss / T::from_count(n);
        Some(lee_estimate(m, v, p, cu2))
    });
    Ok(grid.derive(values, valid, grid.units()))
}
