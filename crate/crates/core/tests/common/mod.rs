#![allow(dead_code)]

use star_core::{GeoTransform, GridSpec, RasterGrid, Units};

pub fn spec(w: usize, h: usize) -> GridSpec {
    GridSpec::new(w, h, GeoTransform::north_up(500_000.0, 4_000_000.0, 10.0), "EPSG:32632")
}

pub fn grid(w: usize, h: usize, values: Vec<f64>, units: Units) -> RasterGrid<f64> {
    RasterGrid::new(spec(w, h), values, units).unwrap()
}

pub fn grid_with_holes(w: usize, h: usize, values: Vec<f64>, valid: Vec<bool>, units: Units) -> RasterGrid<f64> {
    RasterGrid::with_mask(spec(w, h), values, valid, units).unwrap()
}
