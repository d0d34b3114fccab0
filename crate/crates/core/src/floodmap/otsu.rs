use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Result, StarError};
use crate::floodmap::Histogram;
use crate::raster::{RasterGrid, Units};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OtsuResult<T> {
    pub threshold: T,
    /// Index of the last bin of the lower class.
    pub cut: usize,
    pub between_class_variance: T,
    pub total_variance: T,
    /// `between_class_variance / total_variance`, in [0, 1].
    pub bimodality: T,
    /// Samples in the lower and upper class.
    pub class_counts: (u64, u64),
}

/// Between-class variance in squared bin-index units for a cut with `n0`
/// samples of index sum `s0` below and `n1`, `s1` above.
///
/// `ω₀ω₁(μ₀−μ₁)² = (n1·s0 − n0·s1)² / (N²·n0·n1)`; the numerator is formed
/// exactly in integers so the only rounding happens in the final division.
#[inline]
pub fn between_class_index_variance(n0: u64, s0: u128, n1: u64, s1: u128) -> f64 {
    if n0 == 0 || n1 == 0 {
        return 0.0;
    }
    let d = (n1 as i128) * (s0 as i128) - (n0 as i128) * (s1 as i128);
    let n = (n0 + n1) as f64;
    let dn = d as f64 / n;
    dn * dn / (n0 as f64 * n1 as f64)
}

/// Otsu's threshold: the cut between bins `t` and `t+1` maximizing the
/// between-class variance, earliest cut on ties. The threshold is the upper
/// edge of bin `t`.
pub fn otsu<T: Scalar>(hist: &Histogram<T>) -> Result<OtsuResult<T>> {
    let counts = hist.counts();
    if hist.nonempty_bins() < 2 {
        return Err(StarError::DegenerateHistogram(format!(
            "{} samples fall in {} bin(s)",
            hist.total(),
            hist.nonempty_bins()
        )));
    }
    let n: u64 = hist.total();
    let (mut s, mut q) = (0u128, 0u128);
    for (i, c) in counts.iter().enumerate() {
        let (i, c) = (i as u128, *c as u128);
        s += i * c;
        q += i * i * c;
    }

    let mut best = (0usize, -1.0f64, 0u64);
    let (mut n0, mut s0) = (0u64, 0u128);
    for t in 0..counts.len() - 1 {
        n0 += counts[t];
        s0 += t as u128 * counts[t] as u128;
        let sb = between_class_index_variance(n0, s0, n - n0, s - s0);
        if sb > best.1 {
            best = (t, sb, n0);
        }
    }

    let total_num = (n as u128) * q - s * s;
    let nf = n as f64;
    let total = total_num as f64 / nf / nf;
    let bw2 = hist.bin_width() * hist.bin_width();
    let (cut, sb, n0) = best;
    let bimodality = if total > 0.0 { (sb / total).clamp(0.0, 1.0) } else { 0.0 };
    Ok(OtsuResult {
        threshold: hist.edges()[cut + 1],
        cut,
        between_class_variance: T::lit(sb) * bw2,
        total_variance: T::lit(total) * bw2,
        bimodality: T::lit(bimodality),
        class_counts: (n0, n - n0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChessboardParams {
    pub cell_px: usize,
    pub bimodality_min: f64,
    pub bins: usize,
    pub db_min: f64,
    pub db_max: f64,
    /// Smallest share of a cell's valid pixels each class must hold.
    pub class_floor: f64,
}

impl Default for ChessboardParams {
    fn default() -> Self {
        ChessboardParams {
            cell_px: 64,
            bimodality_min: 0.75,
            bins: 256,
            db_min: -30.0,
            db_max: 15.0,
            class_floor: 0.1,
        }
    }
}

impl ChessboardParams {
    pub fn validate(&self) -> Result<()> {
        if self.cell_px < 16 {
            return Err(StarError::param(format!("cell_px must be at least 16, got {}", self.cell_px)));
        }
        if !(self.bimodality_min > 0.0 && self.bimodality_min < 1.0) {
            return Err(StarError::param("bimodality_min must lie in (0, 1)"));
        }
        if !(self.class_floor >= 0.0 && self.class_floor < 0.5) {
            return Err(StarError::param("class_floor must lie in [0, 0.5)"));
        }
        Histogram::<f64>::new(self.db_min, self.db_max, self.bins).map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChessboardResult<T> {
    pub otsu: OtsuResult<T>,
    /// Selected cells as (cell column, cell row).
    pub selected: Vec<(usize, usize)>,
    pub cells_examined: usize,
}

/// Otsu over the union of locally bimodal cells.
///
/// The scene is tiled into `cell_px` squares from the top-left corner; cells
/// holding fewer than a quarter of `cell_px²` valid pixels are skipped. A cell
/// is selected when its own Otsu split reaches `bimodality_min` and each side
/// holds at least `class_floor` of the cell's valid pixels. The final
/// threshold comes from the summed histogram of the selected cells.
pub fn chessboard_otsu<T: Scalar>(grid: &RasterGrid<T>, params: &ChessboardParams) -> Result<ChessboardResult<T>> {
    params.validate()?;
    grid.require_units("chessboard_otsu", &[Units::Db])?;
    let c = params.cell_px;
    let (w, h) = (grid.width(), grid.height());
    let cells: Vec<(usize, usize)> = (0..h.div_ceil(c)).flat_map(|cy| (0..w.div_ceil(c)).map(move |cx| (cx, cy))).collect();
    let empty = Histogram::new(T::lit(params.db_min), T::lit(params.db_max), params.bins)?;
    let min_valid = c * c / 4;

    let verdicts: Vec<Option<Histogram<T>>> = cells
        .par_iter()
        .map(|&(cx, cy)| {
            let mut hist = empty.clone();
            for row in cy * c..((cy + 1) * c).min(h) {
                for col in cx * c..((cx + 1) * c).min(w) {
                    if let Some(v) = grid.get(col, row) {
                        hist.add(v);
                    }
                }
            }
            let n = hist.total();
            if (n as usize) < min_valid {
                return None;
            }
            let r = otsu(&hist).ok()?;
            let floor = params.class_floor * n as f64;
            let balanced = r.class_counts.0 as f64 >= floor && r.class_counts.1 as f64 >= floor;
            (r.bimodality.as_f64() >= params.bimodality_min && balanced).then_some(hist)
        })
        .collect();

    let mut agg = empty;
    let mut selected = Vec::new();
    for (cell, v) in cells.iter().zip(&verdicts) {
        if let Some(hist) = v {
            agg.merge(hist)?;
            selected.push(*cell);
        }
    }
    if selected.is_empty() {
        return Err(StarError::NoBimodalRegion { examined: cells.len() });
    }
    Ok(ChessboardResult {
        otsu: otsu(&agg)?,
        selected,
        cells_examined: cells.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{GeoTransform, GridSpec};

    /// Naive float evaluation with bin centres, used as a second opinion.
    fn naive(hist: &Histogram<f64>) -> (usize, f64) {
        let c = hist.counts();
        let centres: Vec<f64> = (0..c.len()).map(|i| 0.5 * (hist.edges()[i] + hist.edges()[i + 1])).collect();
        let n: f64 = c.iter().map(|x| *x as f64).sum();
        let mut best = (0, -1.0);
        for t in 0..c.len() - 1 {
            let (mut n0, mut m0, mut n1, mut m1) = (0.0, 0.0, 0.0, 0.0);
            for i in 0..c.len() {
                let k = c[i] as f64;
                if i <= t {
                    n0 += k;
                    m0 += k * centres[i];
                } else {
                    n1 += k;
                    m1 += k * centres[i];
                }
            }
            if n0 == 0.0 || n1 == 0.0 {
                continue;
            }
            let sb = (n0 / n) * (n1 / n) * (m0 / n0 - m1 / n1).powi(2);
            if sb > best.1 * (1.0 + 1e-12) {
                best = (t, sb);
            }
        }
        best
    }

    #[test]
    fn two_deltas() {
        let mut counts = vec![0u64; 256];
        let h0 = Histogram::<f64>::new(-30.0, 15.0, 256).unwrap();
        counts[h0.bin_index(-20.0)] = 400;
        counts[h0.bin_index(-8.0)] = 600;
        let h = Histogram::<f64>::from_counts(-30.0, 15.0, counts).unwrap();
        let r = otsu(&h).unwrap();
        assert!(r.threshold > -20.0 && r.threshold < -8.0);
        assert!((r.bimodality - 1.0).abs() < 1e-12);
        assert_eq!(r.class_counts, (400, 600));
        // lowest tie: the cut right after the lower delta
        assert_eq!(r.cut, h0.bin_index(-20.0));
    }

    #[test]
    fn degenerate() {
        let mut counts = vec![0u64; 16];
        counts[5] = 1000;
        let h = Histogram::<f64>::from_counts(0.0, 1.0, counts).unwrap();
        assert!(matches!(otsu(&h), Err(StarError::DegenerateHistogram(_))));
        let h = Histogram::<f64>::new(0.0, 1.0, 16).unwrap();
        assert!(otsu(&h).is_err());
    }

    #[test]
    fn agrees_with_naive_float_scan() {
        let mut state = 0x2545F4914F6CDD1Du64;
        for _ in 0..50 {
            let counts: Vec<u64> = (0..64)
                .map(|_| {
                    state ^= state << 13;
                    state ^= state >> 7;
                    state ^= state << 17;
                    state % 1000
                })
                .collect();
            let h = Histogram::from_counts(-30.0, 15.0, counts).unwrap();
            let r = otsu(&h).unwrap();
            let (t, sb) = naive(&h);
            assert_eq!(r.cut, t);
            assert!((r.between_class_variance - sb).abs() <= 1e-9 * sb);
        }
    }

    #[test]
    fn shift_moves_threshold() {
        let h = Histogram::<f64>::from_counts(-30.0, 15.0, (0..32).map(|i| (i * 7 % 13) as u64).collect()).unwrap();
        let a = otsu(&h).unwrap();
        let b = otsu(&h.shifted(4.25)).unwrap();
        assert_eq!(a.cut, b.cut);
        assert!((b.threshold - a.threshold - 4.25).abs() < 1e-12);
    }

    fn two_class_grid(w: usize, h: usize, water: impl Fn(usize, usize) -> bool) -> RasterGrid<f64> {
        let spec = GridSpec::new(w, h, GeoTransform::north_up(0.0, 0.0, 10.0), "EPSG:32632");
        // approximately Gaussian jitter: a sum of four xorshift uniforms
        let mut state = 0x9E3779B97F4A7C15u64;
        let mut uniform = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let v = (0..w * h)
            .map(|i| {
                let (c, r) = (i % w, i / w);
                let jitter: f64 = (0..4).map(|_| uniform()).sum::<f64>() * 1.5;
                if water(c, r) { -22.0 + jitter } else { -8.0 + jitter }
            })
            .collect();
        RasterGrid::new(spec, v, Units::Db).unwrap()
    }

    #[test]
    fn selects_only_the_mixed_cell() {
        let g = two_class_grid(64, 64, |c, r| c < 16 && r < 32 && c < 32);
        let p = ChessboardParams {
            cell_px: 32,
            ..Default::default()
        };
        let res = chessboard_otsu(&g, &p).unwrap();
        assert_eq!(res.selected, vec![(0, 0)]);
        assert_eq!(res.cells_examined, 4);
        let mut cell = Histogram::new(-30.0, 15.0, 256).unwrap();
        for r in 0..32 {
            for c in 0..32 {
                cell.add(g.get(c, r).unwrap());
            }
        }
        let own = otsu(&cell).unwrap();
        assert!(res.otsu.cut.abs_diff(own.cut) <= 1);
    }

    #[test]
    fn uniform_scene_has_no_bimodal_region() {
        let g = two_class_grid(64, 64, |_, _| false);
        let err = chessboard_otsu(&g, &ChessboardParams::default()).unwrap_err();
        assert!(matches!(err, StarError::NoBimodalRegion { .. }));
        assert_eq!(err.exit_code(), 4);
    }

    #[test]
    fn all_cells_selected_equals_global() {
        let g = two_class_grid(64, 64, |c, r| (c % 32) < 16 && (r % 32) < 20);
        let p = ChessboardParams {
            cell_px: 32,
            ..Default::default()
        };
        let res = chessboard_otsu(&g, &p).unwrap();
        assert_eq!(res.selected.len(), 4);
        let global = otsu(&Histogram::from_grid(&g, -30.0, 15.0, 256).unwrap()).unwrap();
        assert_eq!(res.otsu, global);
    }

    #[test]
    fn chessboard_params_checked() {
        let g = two_class_grid(64, 64, |c, _| c < 32);
        let p = ChessboardParams {
            cell_px: 8,
            ..Default::default()
        };
        assert!(chessboard_otsu(&g, &p).is_err());
    }
}
