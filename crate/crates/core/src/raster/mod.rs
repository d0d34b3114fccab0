//! Grid, kernel and stack primitives shared by every processing step.

mod focal;
mod grid;
mod kernel;
mod resample;
mod stack;

pub use focal::{convolve, focal_stats, FocalStats};
pub(crate) use focal::{check_radius, focal_median, par_map_pixels, weighted_window, window_bounds, window_moments};
pub use grid::{GeoTransform, GridSpec, RasterGrid, Units};
pub use kernel::{Kernel, KernelShape};
pub use resample::{is_geographic, pixel_area_m2, resample_to, ResampleMethod};
pub use stack::{LayerMeta, OrbitPass, Polarization, StackLayer, TimeStack};
