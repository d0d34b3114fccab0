//! Speckle filters for linear-power backscatter: boxcar, Lee, Refined Lee,
//! Gamma MAP, Improved Lee Sigma and the multi-temporal estimator.
//!
//! All adaptive filters share the MMSE form `x̂ = m + W·(p − m)` where `m` is
//! a local mean, `p` the observed pixel and `W` a weight derived from the
//! local variance and the speckle coefficient of variation `Cu = 1/√L`.

mod gamma_map;
mod lee;
mod lee_sigma;
mod multitemporal;
mod refined_lee;

use serde::{Deserialize, Serialize};

use crate::error::{Result, StarError};
use crate::raster::{focal_stats, RasterGrid};
use crate::scalar::Scalar;

pub use gamma_map::{gamma_map, gamma_map_estimate};
pub use lee::{lee, lee_estimate, lee_weight};
pub use lee_sigma::{lee_sigma, sigma_range_quantile};
pub use multitemporal::multitemporal;
pub use refined_lee::refined_lee;

/// Equivalent number of looks assumed for Sentinel-1 IW GRD.
pub const DEFAULT_LOOKS: f64 = 4.4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeckleParams {
    /// Equivalent number of looks `L`.
    pub looks: f64,
    /// Window radius in pixels.
    pub radius: usize,
    /// Lee-sigma coverage `ξ` in (0, 1).
    pub sigma_xi: f64,
    /// Percentile of the scene histogram above which pixels may be point targets.
    pub target_percentile: f64,
    /// Minimum bright 3×3 neighbours for a point target.
    pub target_min_neighbors: usize,
}

impl Default for SpeckleParams {
    fn default() -> Self {
        SpeckleParams {
            looks: DEFAULT_LOOKS,
            radius: 2,
            sigma_xi: 0.9,
            target_percentile: 98.0,
            target_min_neighbors: 5,
        }
    }
}

impl SpeckleParams {
    pub fn new(looks: f64, radius: usize) -> Result<Self> {
        let p = SpeckleParams {
            looks,
            radius,
            ..Default::default()
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_xi(mut self, xi: f64) -> Result<Self> {
        self.sigma_xi = xi;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.looks > 0.0) || !self.looks.is_finite() {
            return Err(StarError::param(format!("looks must be positive, got {}", self.looks)));
        }
        if self.radius < 1 {
            return Err(StarError::param("speckle radius must be at least 1"));
        }
        if !(self.sigma_xi > 0.0 && self.sigma_xi < 1.0) {
            return Err(StarError::param(format!("sigma_xi must lie in (0, 1), got {}", self.sigma_xi)));
        }
        if !(self.target_percentile > 0.0 && self.target_percentile <= 100.0) {
            return Err(StarError::param("target_percentile must lie in (0, 100]"));
        }
        if self.target_min_neighbors > 8 {
            return Err(StarError::param("target_min_neighbors cannot exceed 8"));
        }
        Ok(())
    }

    /// Squared speckle coefficient of variation, `1/L`.
    #[inline]
    pub fn cu2<T: Scalar>(&self) -> T {
        T::one() / T::lit(self.looks)
    }
}

/// Classification used by the Gamma MAP filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PixelClass {
    Homogeneous,
    Heterogeneous,
    PointTarget,
}

/// Single-image filters usable on their own or as the base of
/// [`multitemporal`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeckleFilter {
    Boxcar,
    Lee,
    RefinedLee,
    GammaMap,
    LeeSigma,
}

impl SpeckleFilter {
    pub fn name(&self) -> &'static str {
        match self {
            SpeckleFilter::Boxcar => "boxcar",
            SpeckleFilter::Lee => "lee",
            SpeckleFilter::RefinedLee => "refined_lee",
            SpeckleFilter::GammaMap => "gamma_map",
            SpeckleFilter::LeeSigma => "lee_sigma",
        }
    }

    pub fn apply<T: Scalar>(&self, grid: &RasterGrid<T>, params: &SpeckleParams) -> Result<RasterGrid<T>> {
        match self {
            SpeckleFilter::Boxcar => boxcar(grid, params),
            SpeckleFilter::Lee => lee(grid, params),
            SpeckleFilter::RefinedLee => refined_lee(grid, params),
            SpeckleFilter::GammaMap => gamma_map(grid, params),
            SpeckleFilter::LeeSigma => lee_sigma(grid, params),
        }
    }
}

impl std::str::FromStr for SpeckleFilter {
    type Err = StarError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "boxcar" => SpeckleFilter::Boxcar,
            "lee" => SpeckleFilter::Lee,
            "refined_lee" => SpeckleFilter::RefinedLee,
            "gamma_map" => SpeckleFilter::GammaMap,
            "lee_sigma" => SpeckleFilter::LeeSigma,
            other => return Err(StarError::Config(format!("unknown speckle filter `{other}`"))),
        })
    }
}

/// Moving-window mean.
pub fn boxcar<T: Scalar>(grid: &RasterGrid<T>, params: &SpeckleParams) -> Result<RasterGrid<T>> {
    params.validate()?;
    Ok(focal_stats(grid, params.radius)?.mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{GeoTransform, GridSpec, Units};

    fn spec(w: usize, h: usize) -> GridSpec {
        GridSpec::new(w, h, GeoTransform::north_up(0.0, 0.0, 10.0), "EPSG:32632")
    }

    #[test]
    fn boxcar_impulse() {
        let mut v = vec![0.0; 49];
        v[24] = 9.0;
        let g = RasterGrid::new(spec(7, 7), v, Units::Linear).unwrap();
        let out = boxcar(&g, &SpeckleParams::new(1.0, 1).unwrap()).unwrap();
        for row in 0..7 {
            for col in 0..7 {
                let inside = (2..=4).contains(&row) && (2..=4).contains(&col);
                let got: f64 = out.get(col, row).unwrap();
                if inside {
                    assert!((got - 1.0).abs() < 1e-15);
                } else {
                    assert_eq!(got, 0.0);
                }
            }
        }
    }

    #[test]
    fn params_validation() {
        assert!(SpeckleParams::new(0.0, 1).is_err());
        assert!(SpeckleParams::new(1.0, 0).is_err());
        assert!(SpeckleParams::default().with_xi(1.0).is_err());
        assert!(SpeckleParams::default().with_xi(0.5).is_ok());
    }

    #[test]
    fn all_filters_keep_constant_fields() {
        let g = RasterGrid::<f64>::filled(spec(16, 12), 0.37, Units::Linear);
        let p = SpeckleParams::default();
        for f in [
            SpeckleFilter::Boxcar,
            SpeckleFilter::Lee,
            SpeckleFilter::RefinedLee,
            SpeckleFilter::GammaMap,
            SpeckleFilter::LeeSigma,
        ] {
            let out = f.apply(&g, &p).unwrap();
            assert_eq!(out.valid_count(), g.len(), "{}", f.name());
            assert!(out.valid_values().all(|v| (v - 0.37).abs() < 1e-9), "{}", f.name());
        }
    }
}
