use crate::error::{Result, StarError};
use crate::raster::RasterGrid;
use crate::scalar::Scalar;

/// Uniform-bin histogram over `[lo, hi]`. Samples outside the range are
/// counted in the first or last bin.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram<T> {
    edges: Vec<T>,
    counts: Vec<u64>,
}

impl<T: Scalar> Histogram<T> {
    pub fn new(lo: T, hi: T, bins: usize) -> Result<Self> {
        if bins < 2 {
            return Err(StarError::param(format!("histogram needs at least 2 bins, got {bins}")));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(StarError::param(format!("invalid histogram range [{lo}, {hi}]")));
        }
        let step = (hi - lo) / T::from_count(bins);
        let mut edges: Vec<T> = (0..bins).map(|i| lo + step * T::from_count(i)).collect();
        edges.push(hi);
        Ok(Histogram {
            edges,
            counts: vec![0; bins],
        })
    }

    /// Histogram with explicit counts on a uniform range.
    pub fn from_counts(lo: T, hi: T, counts: Vec<u64>) -> Result<Self> {
        let mut h = Self::new(lo, hi, counts.len())?;
        h.counts = counts;
        Ok(h)
    }

    pub fn from_grid(grid: &RasterGrid<T>, lo: T, hi: T, bins: usize) -> Result<Self> {
        let mut h = Self::new(lo, hi, bins)?;
        h.extend(grid.valid_values());
        Ok(h)
    }

    /// Copy with every edge shifted by `offset`.
    pub fn shifted(&self, offset: T) -> Self {
        Histogram {
            edges: self.edges.iter().map(|e| *e + offset).collect(),
            counts: self.counts.clone(),
        }
    }

    #[inline]
    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn edges(&self) -> &[T] {
        &self.edges
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn lo(&self) -> T {
        self.edges[0]
    }

    pub fn hi(&self) -> T {
        self.edges[self.bins()]
    }

    pub fn bin_width(&self) -> T {
        (self.hi() - self.lo()) / T::from_count(self.bins())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn bin_index(&self, v: T) -> usize {
        let b = self.bins();
        let x = ((v - self.lo()) / self.bin_width()).floor();
        if !(x > T::zero()) {
            0
        } else {
            x.to_usize().unwrap_or(b - 1).min(b - 1)
        }
    }

    #[inline]
    pub fn add(&mut self, v: T) {
        let i = self.bin_index(v);
        self.counts[i] += 1;
    }

    pub fn extend(&mut self, values: impl IntoIterator<Item = T>) {
        for v in values {
            self.add(v);
        }
    }

    pub fn merge(&mut self, other: &Histogram<T>) -> Result<()> {
        if self.edges != other.edges {
            return Err(StarError::param("cannot merge histograms with different bin edges"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    pub fn nonempty_bins(&self) -> usize {
        self.counts.iter().filter(|c| **c > 0).count()
    }
}
