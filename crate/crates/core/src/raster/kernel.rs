use serde::{Deserialize, Serialize};

use crate::error::{Result, StarError};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelShape {
    Square,
    Circle,
}

impl std::str::FromStr for KernelShape {
    type Err = StarError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "square" => Ok(KernelShape::Square),
            "circle" => Ok(KernelShape::Circle),
            other => Err(StarError::Config(format!(
                "unknown kernel shape `{other}` (expected square or circle)"
            ))),
        }
    }
}

/// Square `(2r+1)²` weight matrix anchored at its centre.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel<T> {
    radius: usize,
    shape: KernelShape,
    weights: Vec<T>,
    normalized: bool,
}

impl<T: Scalar> Kernel<T> {
    /// Builds a kernel from explicit row-major weights. Circle kernels drop
    /// weights whose offset lies farther than `radius` from the centre;
    /// `normalize` rescales the remaining weights to sum to one.
    pub fn new(radius: usize, shape: KernelShape, mut weights: Vec<T>, normalize: bool) -> Result<Self> {
        let side = 2 * radius + 1;
        if weights.len() != side * side {
            return Err(StarError::param(format!(
                "kernel of radius {radius} needs {} weights, got {}",
                side * side,
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(StarError::param("kernel weights must be finite"));
        }
        if shape == KernelShape::Circle {
            let r2 = (radius * radius) as isize;
            for (i, w) in weights.iter_mut().enumerate() {
                let dy = (i / side) as isize - radius as isize;
                let dx = (i % side) as isize - radius as isize;
                if dx * dx + dy * dy > r2 {
                    *w = T::zero();
                }
            }
        }
        if normalize {
            let sum: T = weights.iter().copied().sum();
            if sum.abs() <= T::epsilon() {
                return Err(StarError::param("cannot normalize a kernel whose weights sum to zero"));
            }
            for w in weights.iter_mut() {
                *w = *w / sum;
            }
        }
        Ok(Kernel {
            radius,
            shape,
            weights,
            normalized: normalize,
        })
    }

    /// Normalized box kernel.
    pub fn square(radius: usize) -> Self {
        let side = 2 * radius + 1;
        Kernel::new(radius, KernelShape::Square, vec![T::one(); side * side], true).expect("box kernel")
    }

    /// Normalized disk kernel.
    pub fn circle(radius: usize) -> Self {
        let side = 2 * radius + 1;
        Kernel::new(radius, KernelShape::Circle, vec![T::one(); side * side], true).expect("disk kernel")
    }

    pub fn with_shape(radius: usize, shape: KernelShape) -> Self {
        match shape {
            KernelShape::Square => Self::square(radius),
            KernelShape::Circle => Self::circle(radius),
        }
    }

    /// Single unit weight at radius 0.
    pub fn identity() -> Self {
        Kernel::new(0, KernelShape::Square, vec![T::one()], true).expect("identity kernel")
    }

    #[inline]
    pub fn radius(&self) -> usize {
        self.radius
    }

    #[inline]
    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }

    #[inline]
    pub fn shape(&self) -> KernelShape {
        self.shape
    }

    #[inline]
    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    #[inline]
    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Weight at offset (dx, dy) from the anchor.
    #[inline]
    pub fn weight(&self, dx: isize, dy: isize) -> T {
        let r = self.radius as isize;
        self.weights[((dy + r) as usize) * self.side() + (dx + r) as usize]
    }

    /// Copy with weights rescaled to sum to one.
    pub fn normalized(&self) -> Result<Self> {
        if self.normalized {
            return Ok(self.clone());
        }
        Kernel::new(self.radius, self.shape, self.weights.clone(), true)
    }
}
