use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Result, StarError};
use crate::scalar::Scalar;

/// Affine placement of a north-up grid: pixel (col, row) has its upper-left
/// corner at `(origin_x + col * pixel_w, origin_y + row * pixel_h)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoTransform {
    pub origin_x: f64,
    pub origin_y: f64,
    pub pixel_w: f64,
    pub pixel_h: f64,
}

impl GeoTransform {
    pub fn new(origin_x: f64, origin_y: f64, pixel_w: f64, pixel_h: f64) -> Result<Self> {
        let t = GeoTransform {
            origin_x,
            origin_y,
            pixel_w,
            pixel_h,
        };
        t.validate()?;
        Ok(t)
    }

    /// North-up transform with square pixels of `size` CRS units.
    pub fn north_up(origin_x: f64, origin_y: f64, size: f64) -> Self {
        GeoTransform {
            origin_x,
            origin_y,
            pixel_w: size,
            pixel_h: -size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pixel_w > 0.0) || !self.pixel_w.is_finite() {
            return Err(StarError::param(format!(
                "pixel_w must be positive, got {}",
                self.pixel_w
            )));
        }
        if self.pixel_h == 0.0 || !self.pixel_h.is_finite() {
            return Err(StarError::param("pixel_h must be non-zero"));
        }
        if !self.origin_x.is_finite() || !self.origin_y.is_finite() {
            return Err(StarError::param("transform origin must be finite"));
        }
        Ok(())
    }

    /// World coordinates of the centre of pixel (col, row).
    #[inline]
    pub fn pixel_center(&self, col: f64, row: f64) -> (f64, f64) {
        (
            self.origin_x + (col + 0.5) * self.pixel_w,
            self.origin_y + (row + 0.5) * self.pixel_h,
        )
    }

    /// Fractional pixel coordinates where integer values fall on pixel centres.
    #[inline]
    pub fn world_to_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        (
            (x - self.origin_x) / self.pixel_w - 0.5,
            (y - self.origin_y) / self.pixel_h - 0.5,
        )
    }

    fn approx_eq(&self, other: &GeoTransform) -> bool {
        let tol = 1e-9 * self.pixel_w.abs().max(self.pixel_h.abs());
        (self.origin_x - other.origin_x).abs() <= tol
            && (self.origin_y - other.origin_y).abs() <= tol
            && (self.pixel_w - other.pixel_w).abs() <= 1e-12 * self.pixel_w.abs()
            && (self.pixel_h - other.pixel_h).abs() <= 1e-12 * self.pixel_h.abs()
    }
}

/// Dimensions, placement and CRS of a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    pub transform: GeoTransform,
    pub crs_id: String,
}

impl GridSpec {
    pub fn new(width: usize, height: usize, transform: GeoTransform, crs_id: impl Into<String>) -> Self {
        GridSpec {
            width,
            height,
            transform,
            crs_id: crs_id.into(),
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// True when both specs describe the same pixel lattice.
    pub fn same_lattice(&self, other: &GridSpec) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.crs_id == other.crs_id
            && self.transform.approx_eq(&other.transform)
    }

    pub fn check_aligned(&self, other: &GridSpec, what: &str) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(StarError::Alignment(format!(
                "{what}: {}x{} grid does not match {}x{}",
                other.width, other.height, self.width, self.height
            )));
        }
        if !self.same_lattice(other) {
            return Err(StarError::Alignment(format!(
                "{what}: grids share dimensions but not placement or CRS"
            )));
        }
        Ok(())
    }
}

/// Physical meaning of grid values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Units {
    #[serde(rename = "dB")]
    Db,
    #[serde(rename = "linear")]
    Linear,
    #[serde(rename = "degrees")]
    Degrees,
    #[serde(rename = "meters")]
    Meters,
    #[serde(rename = "dimensionless")]
    Dimensionless,
}

impl fmt::Display for Units {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Units::Db => "dB",
            Units::Linear => "linear",
            Units::Degrees => "degrees",
            Units::Meters => "meters",
            Units::Dimensionless => "dimensionless",
        })
    }
}

/// Single-band grid with a validity mask.
///
/// Invalid pixels hold NaN and never contribute to any statistic; every
/// operation that derives a pixel from an invalid input marks it invalid.
#[derive(Debug, Clone)]
pub struct RasterGrid<T> {
    spec: GridSpec,
    values: Vec<T>,
    valid: Vec<bool>,
    units: Units,
}

/// Grids are equal when they share lattice, units and mask, and agree at
/// every valid pixel. Invalid values are ignored.
impl<T: PartialEq> PartialEq for RasterGrid<T> {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
            && self.units == other.units
            && self.valid == other.valid
            && self
                .values
                .iter()
                .zip(&other.values)
                .zip(&self.valid)
                .all(|((a, b), ok)| !ok || a == b)
    }
}

impl<T: Scalar> RasterGrid<T> {
    /// Builds a grid where every finite value is valid.
    pub fn new(spec: GridSpec, values: Vec<T>, units: Units) -> Result<Self> {
        let valid = values.iter().map(|v| v.is_finite()).collect();
        Self::with_mask(spec, values, valid, units)
    }

    /// Builds a grid from values and an explicit validity mask. Non-finite
    /// values are marked invalid regardless of the mask.
    pub fn with_mask(spec: GridSpec, mut values: Vec<T>, mut valid: Vec<bool>, units: Units) -> Result<Self> {
        spec.transform.validate()?;
        let n = spec.len();
        if values.len() != n || valid.len() != n {
            return Err(StarError::param(format!(
                "grid {}x{} needs {} samples, got {} values and {} mask entries",
                spec.width,
                spec.height,
                n,
                values.len(),
                valid.len()
            )));
        }
        for (v, ok) in values.iter_mut().zip(valid.iter_mut()) {
            if !v.is_finite() {
                *ok = false;
            }
            if !*ok {
                *v = T::nan();
            }
        }
        Ok(RasterGrid {
            spec,
            values,
            valid,
            units,
        })
    }

    pub fn filled(spec: GridSpec, value: T, units: Units) -> Self {
        let n = spec.len();
        RasterGrid::new(spec, vec![value; n], units).expect("consistent fill")
    }

    /// Same lattice as `self` with new contents.
    pub fn derive(&self, values: Vec<T>, valid: Vec<bool>, units: Units) -> Self {
        RasterGrid::with_mask(self.spec.clone(), values, valid, units).expect("derived grid has source shape")
    }

    #[inline]
    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.spec.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.spec.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn transform(&self) -> &GeoTransform {
        &self.spec.transform
    }

    #[inline]
    pub fn crs_id(&self) -> &str {
        &self.spec.crs_id
    }

    #[inline]
    pub fn units(&self) -> Units {
        self.units
    }

    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    #[inline]
    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.spec.width + col
    }

    /// Value at (col, row), `None` when invalid.
    #[inline]
    pub fn get(&self, col: usize, row: usize) -> Option<T> {
        let i = self.index(col, row);
        self.valid[i].then(|| self.values[i])
    }

    #[inline]
    pub fn is_valid(&self, i: usize) -> bool {
        self.valid[i]
    }

    /// Marks pixel `i` invalid.
    pub fn invalidate(&mut self, i: usize) {
        self.valid[i] = false;
        self.values[i] = T::nan();
    }

    /// Sets a valid sample; non-finite values invalidate the pixel.
    pub fn set(&mut self, i: usize, value: T) {
        if value.is_finite() {
            self.values[i] = value;
            self.valid[i] = true;
        } else {
            self.invalidate(i);
        }
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Iterates over valid samples in row-major order.
    pub fn valid_values(&self) -> impl Iterator<Item = T> + '_ {
        self.values
            .iter()
            .zip(&self.valid)
            .filter_map(|(v, ok)| ok.then_some(*v))
    }

    /// Mean of valid samples, `None` when no pixel is valid.
    pub fn mean(&self) -> Option<T> {
        let mut sum = T::zero();
        let mut n = 0usize;
        for v in self.valid_values() {
            sum = sum + v;
            n += 1;
        }
        (n > 0).then(|| sum / T::from_count(n))
    }

    pub fn with_units(mut self, units: Units) -> Self {
        self.units = units;
        self
    }

    pub fn require_units(&self, op: &'static str, allowed: &[Units]) -> Result<()> {
        if allowed.contains(&self.units) {
            Ok(())
        } else {
            let expected = allowed
                .iter()
                .map(|u| u.to_string())
                .collect::<Vec<_>>()
                .join(" or ");
            Err(StarError::units(op, expected, self.units))
        }
    }

    pub fn check_aligned<U: Scalar>(&self, other: &RasterGrid<U>, what: &str) -> Result<()> {
        self.spec.check_aligned(&other.spec, what)
    }

    /// Converts the sample type.
    pub fn cast<U: Scalar>(&self) -> RasterGrid<U> {
        let values = self
            .values
            .iter()
            .map(|v| U::from_f64(v.as_f64()).unwrap_or_else(U::nan))
            .collect();
        RasterGrid::with_mask(self.spec.clone(), values, self.valid.clone(), self.units)
            .expect("cast keeps shape")
    }

    /// Applies `f` to every valid sample; `None` invalidates the pixel.
    pub fn map_valid<F>(&self, units: Units, f: F) -> Self
    where
        F: Fn(T) -> Option<T>,
    {
        let mut values = Vec::with_capacity(self.len());
        let mut valid = Vec::with_capacity(self.len());
        for (v, ok) in self.values.iter().zip(&self.valid) {
            match ok.then(|| f(*v)).flatten() {
                Some(x) if x.is_finite() => {
                    values.push(x);
                    valid.push(true);
                }
                _ => {
                    values.push(T::nan());
                    valid.push(false);
                }
            }
        }
        self.derive(values, valid, units)
    }

    /// Keeps values untouched and invalidates pixels where `keep` is false.
    pub fn masked_by(&self, keep: &[bool]) -> Self {
        debug_assert_eq!(keep.len(), self.len());
        let mut out = self.clone();
        for (i, k) in keep.iter().enumerate() {
            if !k {
                out.invalidate(i);
            }
        }
        out
    }
}
