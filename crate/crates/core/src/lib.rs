//! Analysis-ready Sentinel-1 GRD preprocessing and Otsu flood mapping on
//! local raster files.
//!
//! The processing chain covers border-noise and extreme value masking,
//! speckle filtering in linear power, radiometric slope correction,
//! smoothing, connected-component cleanup, temporal compositing and
//! chessboard-segmented Otsu thresholding. Every grid operation is generic
//! over the [`Scalar`] float type; the aliases below fix it to `f64` (the
//! storage type used by the pipeline) or `f32`.

pub mod calibration;
pub mod cube;
pub mod error;
pub mod floodmap;
pub mod objects;
pub mod raster;
pub mod scalar;
pub mod speckle;
pub mod temporal;
pub mod terrain;

pub use error::{Result, StarError};
pub use raster::{GeoTransform, GridSpec, Kernel, KernelShape, RasterGrid, TimeStack, Units};
pub use scalar::Scalar;

/// Double-precision raster, the pipeline's working type.
pub type Raster = RasterGrid<f64>;
/// Single-precision raster, matching the on-disk sample type.
pub type Raster32 = RasterGrid<f32>;
/// Double-precision time stack.
pub type Stack = TimeStack<f64>;
/// Double-precision kernel.
pub type Kernel64 = Kernel<f64>;


/// Double-precision histogram.
pub type Histogram64 = floodmap::Histogram<f64>;
