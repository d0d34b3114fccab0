use crate::error::Result;
use crate::raster::{focal_stats, par_map_pixels, RasterGrid};
use crate::scalar::Scalar;
use crate::speckle::{PixelClass, SpeckleParams};

/// Gamma MAP estimate for one pixel from its local mean and variance.
///
/// `Ci = √v/m` is compared against `Cu = 1/√L` and `Cmax = √2·Cu`: below
/// `Cu` the mean is returned, above `Cmax` the pixel passes through, and in
/// between the positive root of the MAP quadratic is used, clamped to
/// `[min(m, p), max(m, p)]`. Returns `None` when `m` is not positive.
pub fn gamma_map_estimate<T: Scalar>(mean: T, variance: T, pixel: T, looks: T) -> Option<(T, PixelClass)> {
    if !(mean > T::zero()) {
        return None;
    }
    let cu2 = T::one() / looks;
    let cu = cu2.sqrt();
    let cmax = T::lit(2.0).sqrt() * cu;
    let ci = variance.max(T::zero()).sqrt() / mean;
    if ci <= cu {
        return Some((mean, PixelClass::Homogeneous));
    }
    if ci >= cmax {
        return Some((pixel, PixelClass::PointTarget));
    }
    let alpha = (T::one() + cu2) / (ci * ci - cu2);
    let b = alpha - looks - T::one();
    let d = mean * mean * b * b + T::lit(4.0) * alpha * looks * mean * pixel;
    let est = (b * mean + d.max(T::zero()).sqrt()) / (T::lit(2.0) * alpha);
    let lo = mean.min(pixel);
    let hi = mean.max(pixel);
    Some((est.max(lo).min(hi), PixelClass::Heterogeneous))
}

/// Gamma MAP filter over the `(2r+1)²` window.
pub fn gamma_map<T: Scalar>(grid: &RasterGrid<T>, params: &SpeckleParams) -> Result<RasterGrid<T>> {
    params.validate()?;
    let stats = focal_stats(grid, params.radius)?;
    let looks = T::lit(params.looks);
    let w = grid.width();
    let (values, valid) = par_map_pixels(w, grid.height(), |col, row| {
        let i = row * w + col;
        if !stats.mean.is_valid(i) {
            return None;
        }
        gamma_map_estimate(stats.mean.values()[i], stats.variance.values()[i], grid.values()[i], looks).map(|(v, _)| v)
    });
    Ok(grid.derive(values, valid, grid.units()))
}
