//! Stack alignment, temporal compositing and dual-polarization band maths.

use serde::{Deserialize, Serialize};

use crate::error::{Result, StarError};
use crate::raster::{
    par_map_pixels, resample_to, GridSpec, OrbitPass, RasterGrid, ResampleMethod, StackLayer, TimeStack, Units,
};
use crate::scalar::Scalar;

/// Resamples every layer onto `target` (bilinear) and orders the layers by
/// timestamp. Layers already on the target lattice are passed through.
pub fn align_stack<T: Scalar>(layers: Vec<StackLayer<T>>, target: &GridSpec) -> Result<TimeStack<T>> {
    let mut out = Vec::with_capacity(layers.len());
    for layer in layers {
        let grid = if layer.grid.spec().same_lattice(target) && layer.grid.crs_id() == target.crs_id {
            layer.grid
        } else {
            resample_to(&layer.grid, target, ResampleMethod::Bilinear)?
        };
        out.push(StackLayer { grid, meta: layer.meta });
    }
    out.sort_by_key(|l| l.meta.timestamp);
    TimeStack::new(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompositeStat {
    Mean,
    #[default]
    Median,
    Min,
    Max,
}

impl std::str::FromStr for CompositeStat {
    type Err = StarError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "mean" => CompositeStat::Mean,
            "median" => CompositeStat::Median,
            "min" => CompositeStat::Min,
            "max" => CompositeStat::Max,
            other => return Err(StarError::Config(format!("unknown composite stat `{other}`"))),
        })
    }
}

/// Statistic over the sorted valid samples of one pixel. The median is the
/// lower median, so it is always one of the samples.
fn reduce_sorted<T: Scalar>(sorted: &[T], stat: CompositeStat) -> T {
    match stat {
        CompositeStat::Mean => sorted.iter().copied().sum::<T>() / T::from_count(sorted.len()),
        CompositeStat::Median => sorted[(sorted.len() - 1) / 2],
        CompositeStat::Min => sorted[0],
        CompositeStat::Max => sorted[sorted.len() - 1],
    }
}

/// Per-pixel statistic over the valid layer values. A pixel is invalid only
/// where no layer is valid. Samples are sorted before reduction so the result
/// does not depend on layer order.
pub fn composite<T: Scalar>(stack: &TimeStack<T>, stat: CompositeStat) -> Result<RasterGrid<T>> {
    let Some(first) = stack.layers().first() else {
        return Err(StarError::param("cannot composite an empty stack"));
    };
    let grids: Vec<&RasterGrid<T>> = stack.layers().iter().map(|l| &l.grid).collect();
    let w = first.grid.width();
    let (values, valid) = par_map_pixels(w, first.grid.height(), |col, row| {
        let i = row * w + col;
        let mut buf: Vec<T> = grids.iter().filter(|g| g.is_valid(i)).map(|g| g.values()[i]).collect();
        if buf.is_empty() {
            return None;
        }
        buf.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
        Some(reduce_sorted(&buf, stat))
    });
    Ok(first.grid.derive(values, valid, first.grid.units()))
}

/// Composites ascending and descending passes separately, then merges them by
/// the per-pixel mean of the available pass composites.
pub fn composite_per_pass<T: Scalar>(stack: &TimeStack<T>, stat: CompositeStat) -> Result<RasterGrid<T>> {
    if stack.is_empty() {
        return Err(StarError::param("cannot composite an empty stack"));
    }
    let parts: Vec<RasterGrid<T>> = [OrbitPass::Ascending, OrbitPass::Descending]
        .into_iter()
        .map(|p| stack.filter_pass(p))
        .filter(|s| !s.is_empty())
        .map(|s| composite(&s, stat))
        .collect::<Result<_>>()?;
    if parts.len() == 1 {
        return Ok(parts.into_iter().next().expect("one part"));
    }
    let first = &parts[0];
    let n = first.len();
    let mut values = vec![T::nan(); n];
    let mut valid = vec![false; n];
    for i in 0..n {
        let mut sum = T::zero();
        let mut k = 0usize;
        for p in &parts {
            if p.is_valid(i) {
                sum = sum + p.values()[i];
                k += 1;
            }
        }
        if k > 0 {
            values[i] = sum / T::from_count(k);
            valid[i] = true;
        }
    }
    Ok(first.derive(values, valid, first.units()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandCombo {
    Sum,
    Diff,
    Ratio,
    Rvi,
}

impl std::str::FromStr for BandCombo {
    type Err = StarError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "sum" => BandCombo::Sum,
            "diff" => BandCombo::Diff,
            "ratio" => BandCombo::Ratio,
            "rvi" => BandCombo::Rvi,
            other => return Err(StarError::Config(format!("unknown band combination `{other}`"))),
        })
    }
}

/// VV/VH combinations in linear power: `vv+vh`, `vv−vh`, `vh/vv` and the
/// radar vegetation index `4·vh/(vv+vh)`. Only the sum stays in linear
/// power units; the others are dimensionless.
pub fn band_combine<T: Scalar>(vv: &RasterGrid<T>, vh: &RasterGrid<T>, combo: BandCombo) -> Result<RasterGrid<T>> {
    vv.require_units("band_combine", &[Units::Linear])?;
    vh.require_units("band_combine", &[Units::Linear])?;
    vv.check_aligned(vh, "VH band")?;
    let four = T::lit(4.0);
    let mut values = Vec::with_capacity(vv.len());
    let mut valid = Vec::with_capacity(vv.len());
    for i in 0..vv.len() {
        let (a, b) = (vv.values()[i], vh.values()[i]);
        let out = if vv.is_valid(i) && vh.is_valid(i) {
            match combo {
                BandCombo::Sum => Some(a + b),
                BandCombo::Diff => Some(a - b),
                BandCombo::Ratio => (a > T::zero()).then(|| b / a),
                BandCombo::Rvi => (a + b > T::zero()).then(|| four * b / (a + b)),
            }
        } else {
            None
        };
        values.push(out.unwrap_or_else(T::nan));
        valid.push(out.is_some());
    }
    let units = if combo == BandCombo::Sum { Units::Linear } else { Units::Dimensionless };
    Ok(vv.derive(values, valid, units))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{GeoTransform, LayerMeta, Polarization};
    use chrono::{TimeZone, Utc};

    fn spec(w: usize, h: usize) -> GridSpec {
        GridSpec::new(w, h, GeoTransform::north_up(0.0, 0.0, 10.0), "EPSG:32632")
    }

    fn meta(day: u32, pass: OrbitPass) -> LayerMeta {
        LayerMeta {
            timestamp: Utc.with_ymd_and_hms(2022, 9, day, 5, 0, 0).unwrap(),
            orbit_pass: pass,
            relative_orbit: 1,
            polarization: Polarization::VV,
        }
    }

    fn layer(v: Vec<f64>, valid: Vec<bool>, day: u32, pass: OrbitPass) -> StackLayer<f64> {
        let n = v.len();
        StackLayer {
            grid: RasterGrid::with_mask(spec(n, 1), v, valid, Units::Db).unwrap(),
            meta: meta(day, pass),
        }
    }

    fn stack(cols: &[Option<f64>]) -> TimeStack<f64> {
        let layers = cols
            .iter()
            .enumerate()
            .map(|(k, v)| layer(vec![v.unwrap_or(f64::NAN)], vec![v.is_some()], k as u32 + 1, OrbitPass::Ascending))
            .collect();
        TimeStack::new(layers).unwrap()
    }

    #[test]
    fn median_and_mean_with_holes() {
        let s = stack(&[Some(2.0), Some(4.0), Some(9.0)]);
        assert_eq!(composite(&s, CompositeStat::Median).unwrap().get(0, 0), Some(4.0));
        let s = stack(&[Some(2.0), None, Some(9.0)]);
        assert_eq!(composite(&s, CompositeStat::Mean).unwrap().get(0, 0), Some(5.5));
        assert_eq!(composite(&s, CompositeStat::Median).unwrap().get(0, 0), Some(2.0));
        let s = stack(&[None, None]);
        assert_eq!(composite(&s, CompositeStat::Max).unwrap().get(0, 0), None);
    }

    #[test]
    fn empty_stack_is_error() {
        let s = TimeStack::<f64>::new(vec![]).unwrap();
        assert!(composite(&s, CompositeStat::Mean).is_err());
    }

    #[test]
    fn single_layer_identity() {
        let s = stack(&[Some(-13.25)]);
        for st in [CompositeStat::Mean, CompositeStat::Median, CompositeStat::Min, CompositeStat::Max] {
            assert_eq!(composite(&s, st).unwrap().get(0, 0), Some(-13.25));
        }
    }

    #[test]
    fn per_pass_merge_is_mean_of_passes() {
        let layers = vec![
            layer(vec![1.0, 5.0], vec![true, true], 1, OrbitPass::Ascending),
            layer(vec![3.0, 0.0], vec![true, false], 2, OrbitPass::Descending),
            layer(vec![2.0, 7.0], vec![true, true], 3, OrbitPass::Ascending),
        ];
        let s = TimeStack::new(layers).unwrap();
        let out = composite_per_pass(&s, CompositeStat::Mean).unwrap();
        assert_eq!(out.get(0, 0), Some((1.5 + 3.0) / 2.0));
        assert_eq!(out.get(1, 0), Some(6.0));
    }

    #[test]
    fn align_sorts_and_passes_through() {
        let a = layer(vec![1.0, 2.0], vec![true, true], 9, OrbitPass::Ascending);
        let b = layer(vec![3.0, 4.0], vec![true, true], 2, OrbitPass::Ascending);
        let s = align_stack(vec![a.clone(), b.clone()], &spec(2, 1)).unwrap();
        assert_eq!(s.layers()[0], b);
        assert_eq!(s.layers()[1], a);
        let other = GridSpec::new(2, 1, GeoTransform::north_up(0.0, 0.0, 10.0), "EPSG:4326");
        assert!(matches!(
            align_stack(vec![a], &other),
            Err(StarError::UnsupportedProjection { .. })
        ));
    }

    #[test]
    fn align_shifted_smooth_field() {
        // a linear ramp is reproduced exactly by bilinear interpolation
        let (w, h) = (12usize, 10usize);
        let ramp = |x: f64, y: f64| 0.5 * x - 0.25 * y + 3.0;
        let src_t = GeoTransform::north_up(0.0, 100.0, 10.0);
        let src = GridSpec::new(w, h, src_t, "EPSG:32632");
        let v = (0..w * h)
            .map(|i| {
                let (x, y) = src_t.pixel_center((i % w) as f64, (i / w) as f64);
                ramp(x, y)
            })
            .collect();
        let l = StackLayer {
            grid: RasterGrid::new(src, v, Units::Db).unwrap(),
            meta: meta(1, OrbitPass::Ascending),
        };
        let tgt_t = GeoTransform::north_up(5.0, 95.0, 10.0);
        let tgt = GridSpec::new(w - 1, h - 1, tgt_t, "EPSG:32632");
        let s = align_stack(vec![l], &tgt).unwrap();
        let g = &s.layers()[0].grid;
        assert_eq!(g.valid_count(), g.len());
        for row in 0..h - 1 {
            for col in 0..w - 1 {
                let (x, y) = tgt_t.pixel_center(col as f64, row as f64);
                assert!((g.get(col, row).unwrap() - ramp(x, y)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn band_combinations() {
        let s = spec(3, 1);
        let vv = RasterGrid::new(s.clone(), vec![0.2, 0.5, 0.0], Units::Linear).unwrap();
        let vh = RasterGrid::new(s.clone(), vec![0.2, 0.0, 0.0], Units::Linear).unwrap();
        let rvi = band_combine(&vv, &vh, BandCombo::Rvi).unwrap();
        assert_eq!(rvi.get(0, 0), Some(2.0));
        assert_eq!(rvi.get(1, 0), Some(0.0));
        assert_eq!(rvi.get(2, 0), None);
        let ratio = band_combine(&vv, &vh, BandCombo::Ratio).unwrap();
        assert_eq!(ratio.get(1, 0), Some(0.0));
        assert_eq!(ratio.get(2, 0), None);
        assert_eq!(band_combine(&vv, &vh, BandCombo::Diff).unwrap().get(1, 0), Some(0.5));
        assert_eq!(band_combine(&vv, &vh, BandCombo::Sum).unwrap().units(), Units::Linear);
        let db = vv.clone().with_units(Units::Db);
        assert!(band_combine(&db, &vh, BandCombo::Sum).is_err());
    }
}
