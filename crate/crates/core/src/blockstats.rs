//! Block-variance descriptors and mean-absolute-error comparators.

use crate::error::{Error, Result};
use crate::grid::Grid2D;

pub const DEFAULT_BLOCK: usize = 8;

/// Population variance of each `block x block` tile, tiled from the top-left.
/// Trailing partial tiles use their true pixel count.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockVarianceGrid {
    pub rows: usize,
    pub cols: usize,
    pub block: usize,
    pub variances: Vec<f64>,
}

impl BlockVarianceGrid {
    pub fn len(&self) -> usize {
        self.variances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variances.is_empty()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.variances[row * self.cols + col]
    }

    fn layout(&self) -> (usize, usize, usize) {
        (self.rows, self.cols, self.block)
    }
}

pub fn block_variance(g: &Grid2D, block: usize) -> Result<BlockVarianceGrid> {
    if block == 0 {
        return Err(Error::invalid("block size must be >= 1"));
    }
    let (h, w) = g.dims();
    let rows = h.div_ceil(block);
    let cols = w.div_ceil(block);
    let mut variances = Vec::with_capacity(rows * cols);
    for br in 0..rows {
        let r_end = ((br + 1) * block).min(h);
        for bc in 0..cols {
            let c0 = bc * block;
            let c_end = (c0 + block).min(w);
            let n = ((r_end - br * block) * (c_end - c0)) as f64;
            let mut sum = 0.0;
            for r in br * block..r_end {
                for &v in &g.row(r)[c0..c_end] {
                    sum += v;
                }
            }
            let mean = sum / n;
            let mut ss = 0.0;
            for r in br * block..r_end {
                for &v in &g.row(r)[c0..c_end] {
                    ss += (v - mean) * (v - mean);
                }
            }
            variances.push(ss / n);
        }
    }
    Ok(BlockVarianceGrid { rows, cols, block, variances })
}

/// Mean absolute difference between two descriptors with identical layout.
pub fn mae_vargrids(a: &BlockVarianceGrid, b: &BlockVarianceGrid) -> Result<f64> {
    if a.layout() != b.layout() {
        return Err(Error::invalid(format!(
            "block layouts differ: {:?} vs {:?}; resize maps to a common size first",
            a.layout(),
            b.layout()
        )));
    }
    Ok(mae_slices(&a.variances, &b.variances))
}

/// Mean absolute pixel difference between equally sized maps.
pub fn mae_maps(a: &Grid2D, b: &Grid2D) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::invalid(format!("map dims differ: {:?} vs {:?}", a.dims(), b.dims())));
    }
    Ok(mae_slices(a.as_slice(), b.as_slice()))
}

#[inline]
pub(crate) fn mae_slices(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += (x - y).abs();
    }
    acc / a.len() as f64
}
