use rayon::prelude::*;

use crate::error::{Result, StarError};
use crate::raster::{StackLayer, TimeStack, Units};
use crate::scalar::Scalar;
use crate::speckle::{SpeckleFilter, SpeckleParams};

/// Multi-temporal speckle filter.
///
/// With `s_j = base(layer_j)`, each output layer is
/// `out_k = s_k · (1/N) · Σ_j layer_j / s_j`. Pixels where any `s_j` is
/// invalid or non-positive, or any layer is invalid, are invalid in every
/// output layer. A single-layer stack is returned unchanged.
pub fn multitemporal<T: Scalar>(stack: &TimeStack<T>, base: SpeckleFilter, params: &SpeckleParams) -> Result<TimeStack<T>> {
    params.validate()?;
    if stack.is_empty() {
        return Err(StarError::param("multitemporal filtering needs at least one layer"));
    }
    for l in stack.layers() {
        l.grid.require_units("multitemporal", &[Units::Linear])?;
    }
    if stack.len() == 1 {
        return Ok(stack.clone());
    }

    let filtered: Vec<_> = stack
        .layers()
        .par_iter()
        .map(|l| base.apply(&l.grid, params))
        .collect::<Result<_>>()?;

    let n_px = stack.layers()[0].grid.len();
    let n = T::from_count(stack.len());
    let mut ratio_mean = vec![T::nan(); n_px];
    let mut usable = vec![true; n_px];
    for (px, (acc, ok)) in ratio_mean.iter_mut().zip(usable.iter_mut()).enumerate() {
        let mut sum = T::zero();
        for (layer, f) in stack.layers().iter().zip(&filtered) {
            let s = f.values()[px];
            if !layer.grid.is_valid(px) || !f.is_valid(px) || !(s > T::zero()) {
                *ok = false;
                break;
            }
            sum = sum + layer.grid.values()[px] / s;
        }
        if *ok {
            *acc = sum / n;
        }
    }

    let layers = stack
        .layers()
        .iter()
        .zip(filtered)
        .map(|(layer, f)| {
            let values: Vec<T> = f.values().iter().zip(&ratio_mean).map(|(s, r)| *s * *r).collect();
            StackLayer {
                grid: layer.grid.derive(values, usable.clone(), Units::Linear),
                meta: layer.meta.clone(),
            }
        })
        .collect();
    TimeStack::new(layers)
}
