use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Result, StarError};
use crate::raster::RasterGrid;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OrbitPass {
    #[serde(rename = "ASC")]
    Ascending,
    #[serde(rename = "DESC")]
    Descending,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarization {
    VV,
    VH,
}

/// Acquisition metadata carried by each stack layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerMeta {
    pub timestamp: DateTime<Utc>,
    pub orbit_pass: OrbitPass,
    pub relative_orbit: i32,
    pub polarization: Polarization,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackLayer<T> {
    pub grid: RasterGrid<T>,
    pub meta: LayerMeta,
}

/// Co-registered layers ordered by acquisition time.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeStack<T> {
    layers: Vec<StackLayer<T>>,
}

impl<T: Scalar> TimeStack<T> {
    /// Checks that all layers share one lattice and unit and that timestamps
    /// are non-decreasing.
    pub fn new(layers: Vec<StackLayer<T>>) -> Result<Self> {
        if let Some(first) = layers.first() {
            for (k, l) in layers.iter().enumerate().skip(1) {
                first.grid.check_aligned(&l.grid, &format!("stack layer {k}"))?;
                if l.grid.units() != first.grid.units() {
                    return Err(StarError::units("TimeStack::new", first.grid.units().to_string(), l.grid.units()));
                }
            }
            for pair in layers.windows(2) {
                if pair[1].meta.timestamp < pair[0].meta.timestamp {
                    return Err(StarError::param("stack timestamps must be non-decreasing"));
                }
            }
        }
        Ok(TimeStack { layers })
    }

    #[inline]
    pub fn layers(&self) -> &[StackLayer<T>] {
        &self.layers
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.layers.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn into_layers(self) -> Vec<StackLayer<T>> {
        self.layers
    }

    /// Sub-stack of layers acquired on `pass`, order preserved.
    pub fn filter_pass(&self, pass: OrbitPass) -> TimeStack<T> {
        TimeStack {
            layers: self
                .layers
                .iter()
                .filter(|l| l.meta.orbit_pass == pass)
                .cloned()
                .collect(),
        }
    }
}
