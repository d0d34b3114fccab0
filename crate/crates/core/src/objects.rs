//! Smoothing and connected-component object statistics on binary masks.

use serde::{Deserialize, Serialize};

use crate::error::{Result, StarError};
use crate::raster::{focal_median, weighted_window, GridSpec, Kernel, RasterGrid, Units};
use crate::scalar::Scalar;

/// Binary raster with its own validity mask. Invalid pixels always read as 0.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    spec: GridSpec,
    set: Vec<bool>,
    valid: Vec<bool>,
}

impl BinaryMask {
    pub fn new(spec: GridSpec, set: Vec<bool>, valid: Vec<bool>) -> Result<Self> {
        if set.len() != spec.len() || valid.len() != spec.len() {
            return Err(StarError::param("mask buffers do not match grid dimensions"));
        }
        let set = set.iter().zip(&valid).map(|(s, v)| *s && *v).collect();
        Ok(BinaryMask { spec, set, valid })
    }

    /// All pixels valid.
    pub fn from_bits(spec: GridSpec, set: Vec<bool>) -> Result<Self> {
        let valid = vec![true; set.len()];
        Self::new(spec, set, valid)
    }

    /// Reads a 0/1 grid; other valid values are rejected.
    pub fn from_grid<T: Scalar>(grid: &RasterGrid<T>) -> Result<Self> {
        let mut set = Vec::with_capacity(grid.len());
        for (v, ok) in grid.values().iter().zip(grid.valid()) {
            if !ok || *v == T::zero() {
                set.push(false);
            } else if *v == T::one() {
                set.push(true);
            } else {
                return Err(StarError::param(format!("mask value {v} is not 0 or 1")));
            }
        }
        Self::new(grid.spec().clone(), set, grid.valid().to_vec())
    }

    pub fn to_grid<T: Scalar>(&self) -> RasterGrid<T> {
        let values = self.set.iter().map(|s| if *s { T::one() } else { T::zero() }).collect();
        RasterGrid::with_mask(self.spec.clone(), values, self.valid.clone(), Units::Dimensionless).expect("mask shape")
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn width(&self) -> usize {
        self.spec.width
    }

    pub fn height(&self) -> usize {
        self.spec.height
    }

    pub fn len(&self) -> usize {
        self.set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.set.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.set
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    #[inline]
    pub fn is_set(&self, i: usize) -> bool {
        self.set[i]
    }

    pub fn count(&self) -> usize {
        self.set.iter().filter(|s| **s).count()
    }

    pub fn check_aligned(&self, other: &BinaryMask, what: &str) -> Result<()> {
        self.spec.check_aligned(&other.spec, what)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

impl std::str::FromStr for Connectivity {
    type Err = StarError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "four" | "4" => Ok(Connectivity::Four),
            "eight" | "8" => Ok(Connectivity::Eight),
            other => Err(StarError::Config(format!("unknown connectivity `{other}`"))),
        }
    }
}

/// Default saturation for [`connected_pixel_count`].
pub const DEFAULT_MAX_COUNT: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SmoothMode {
    #[default]
    Mean,
    Median,
}

impl std::str::FromStr for SmoothMode {
    type Err = StarError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(SmoothMode::Mean),
            "median" => Ok(SmoothMode::Median),
            other => Err(StarError::Config(format!("unknown smoothing mode `{other}`"))),
        }
    }
}

/// Low-pass smoothing: a normalized convolution (mean) or the lower median
/// of the valid pixels under the kernel footprint.
pub fn smooth<T: Scalar>(grid: &RasterGrid<T>, kernel: &Kernel<T>, mode: SmoothMode) -> Result<RasterGrid<T>> {
    match mode {
        SmoothMode::Mean => Ok(weighted_window(grid, &kernel.normalized()?)),
        SmoothMode::Median => Ok(focal_median(grid, kernel)),
    }
}

struct DisjointSet {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl DisjointSet {
    fn new() -> Self {
        DisjointSet {
            parent: Vec::new(),
            size: Vec::new(),
        }
    }

    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        self.size.push(0);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) -> u32 {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return ra;
        }
        let (keep, drop) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[drop as usize] = keep;
        keep
    }
}

/// Two-pass union-find labelling. Returns per-pixel component roots (or
/// `u32::MAX` for background) and the size of each root.
fn label(mask: &BinaryMask, conn: Connectivity) -> (Vec<u32>, Vec<u32>) {
    let w = mask.width();
    let h = mask.height();
    let mut labels = vec![u32::MAX; w * h];
    let mut ds = DisjointSet::new();
    for row in 0..h {
        for col in 0..w {
            let i = row * w + col;
            if !mask.set[i] {
                continue;
            }
            let mut current: Option<u32> = None;
            let link = |j: usize, current: &mut Option<u32>, ds: &mut DisjointSet| {
                let l = labels[j];
                if l != u32::MAX {
                    *current = Some(match *current {
                        None => l,
                        Some(c) => ds.union(c, l),
                    });
                }
            };
            if col > 0 {
                link(i - 1, &mut current, &mut ds);
            }
            if row > 0 {
                link(i - w, &mut current, &mut ds);
                if conn == Connectivity::Eight {
                    if col > 0 {
                        link(i - w - 1, &mut current, &mut ds);
                    }
                    if col + 1 < w {
                        link(i - w + 1, &mut current, &mut ds);
                    }
                }
            }
            labels[i] = current.unwrap_or_else(|| ds.make());
        }
    }
    for l in labels.iter_mut() {
        if *l != u32::MAX {
            *l = ds.find(*l);
            ds.size[*l as usize] += 1;
        }
    }
    (labels, ds.size)
}

/// Size of the connected component each set pixel belongs to, saturated at
/// `max_count`. Background pixels get 0.
pub fn connected_pixel_count(mask: &BinaryMask, conn: Connectivity, max_count: usize) -> Result<RasterGrid<f64>> {
    if max_count == 0 {
        return Err(StarError::param("max_count must be positive"));
    }
    let (labels, sizes) = label(mask, conn);
    let values = labels
        .iter()
        .map(|&l| {
            if l == u32::MAX {
                0.0
            } else {
                (sizes[l as usize] as usize).min(max_count) as f64
            }
        })
        .collect();
    RasterGrid::with_mask(mask.spec.clone(), values, mask.valid.clone(), Units::Dimensionless)
}

/// Clears components with fewer than `min_pixels` pixels.
pub fn filter_min_size(mask: &BinaryMask, conn: Connectivity, min_pixels: usize) -> BinaryMask {
    if min_pixels <= 1 {
        return mask.clone();
    }
    let (labels, sizes) = label(mask, conn);
    let set = labels
        .iter()
        .map(|&l| l != u32::MAX && sizes[l as usize] as usize >= min_pixels)
        .collect();
    BinaryMask {
        spec: mask.spec.clone(),
        set,
        valid: mask.valid.clone(),
    }
}
