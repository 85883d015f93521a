//! Discretized Kac kernel: a compactly supported smooth bump at range L,
//! normalized on the cell grid so that convolving a constant returns it.

use crate::error::{Error, Result};

/// The kernel must span at least this many cells.
pub const MIN_RANGE_RATIO: f64 = 4.0;

/// Smooth bump supported on r < 1.
pub fn bump(r: f64) -> f64 {
    if r.abs() < 1.0 {
        (-1.0 / (1.0 - r * r)).exp()
    } else {
        0.0
    }
}

/// Kernel weights discretized on a grid of cells of linear size `cell`,
/// interaction range `range` (both in lattice units).
///
/// The 2-D weights sample the bump at cell-center offsets inside the disk
/// of radius range/cell; the 1-D weights are their marginal along one axis,
/// which is the exact cross-strip kernel for profiles constant along a
/// strip. Both sets are normalized to sum to 1.
#[derive(Debug, Clone)]
pub struct KacKernel {
    pub range: f64,
    pub cell: f64,
    half_width: i64,
    w1: Vec<f64>,
    w2: Vec<((i64, i64), f64)>,
}

impl KacKernel {
    pub fn new(range: f64, cell: f64) -> Result<Self> {
        if !(range > 0.0 && cell > 0.0) {
            return Err(Error::Geometry(format!(
                "kernel range {range} and cell {cell} must be positive"
            )));
        }
        let ratio = range / cell;
        if ratio < MIN_RANGE_RATIO {
            return Err(Error::KernelTooCoarse { ratio });
        }
        // the bump vanishes at r = 1, so offsets at |j| >= ratio drop out
        let k = (ratio.ceil() as i64) - 1;
        let mut w2 = Vec::new();
        let mut sum2 = 0.0;
        for i in -k..=k {
            for j in -k..=k {
                let r = ((i * i + j * j) as f64).sqrt() / ratio;
                let w = bump(r);
                if w > 0.0 {
                    w2.push(((i, j), w));
                    sum2 += w;
                }
            }
        }
        for (_, w) in &mut w2 {
            *w /= sum2;
        }
        let mut w1 = vec![0.0; (2 * k + 1) as usize];
        for &((i, _), w) in &w2 {
            w1[(i + k) as usize] += w;
        }
        Ok(KacKernel { range, cell, half_width: k, w1, w2 })
    }

    /// Maximum cell offset with nonzero weight.
    pub fn half_width(&self) -> usize {
        self.half_width as usize
    }

    /// Marginal weight at 1-D cell offset `j` (zero outside the support).
    pub fn weight_1d(&self, j: i64) -> f64 {
        if j.abs() > self.half_width {
            0.0
        } else {
            self.w1[(j + self.half_width) as usize]
        }
    }

    /// Marginal weights for offsets -half_width ..= half_width.
    pub fn weights_1d(&self) -> &[f64] {
        &self.w1
    }

    /// Full 2-D weights as (offset, weight) pairs.
    pub fn weights_2d(&self) -> &[((i64, i64), f64)] {
        &self.w2
    }
}
