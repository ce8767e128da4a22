//! Dense 2-D real and complex grids, channel stacks, resampling and the 2-D DFT.
//!
//! All grids are row-major and stored in 64-bit floats. Grids are immutable
//! values: every operation returns a new grid.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A real-valued `height x width` grid.
#[derive(Clone, PartialEq)]
pub struct Grid2D {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Grid2D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Grid2D({}x{})", self.height, self.width)
    }
}

impl Grid2D {
    /// Wraps row-major `data`. Rejects empty dimensions, a length mismatch or
    /// non-finite values.
    pub fn from_vec(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid(format!("grid dims must be >= 1, got {height}x{width}")));
        }
        if data.len() != height * width {
            return Err(Error::invalid(format!(
                "grid {height}x{width} needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite value at flat index {i}")));
        }
        Ok(Self { height, width, data })
    }

    pub(crate) fn from_vec_unchecked(height: usize, width: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), height * width);
        Self { height, width, data }
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        assert!(height > 0 && width > 0, "grid dims must be >= 1");
        Self::from_vec_unchecked(height, width, vec![value; height * width])
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(height > 0 && width > 0, "grid dims must be >= 1");
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self::from_vec_unchecked(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.width..(row + 1) * self.width]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_vec_unchecked(self.height, self.width, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn scale(&self, factor: f64) -> Self {
        self.map(|v| v * factor)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    /// `(min, max)` over all pixels.
    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Min-max scales into `[0, 1]`. A constant grid maps to all zeros.
    pub fn normalize_min_max(&self) -> Self {
        let (lo, hi) = self.min_max();
        let span = hi - lo;
        if span <= 0.0 {
            return Self::zeros(self.height, self.width);
        }
        self.map(|v| ((v - lo) / span).clamp(0.0, 1.0))
    }

    pub fn resize(&self, out_h: usize, out_w: usize, method: Interpolation) -> Result<Self> {
        resize(self, out_h, out_w, method)
    }

    pub fn dft2(&self) -> ComplexGrid2D {
        dft2(self)
    }
}

/// A complex-valued grid; used for spectra and quadrature filter responses.
#[derive(Clone, PartialEq)]
pub struct ComplexGrid2D {
    height: usize,
    width: usize,
    data: Vec<Complex64>,
}

impl fmt::Debug for ComplexGrid2D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ComplexGrid2D({}x{})", self.height, self.width)
    }
}

impl ComplexGrid2D {
    pub fn from_vec(height: usize, width: usize, data: Vec<Complex64>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width {
            return Err(Error::invalid(format!(
                "complex grid {height}x{width} cannot hold {} values",
                data.len()
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn from_real(g: &Grid2D) -> Self {
        Self {
            height: g.height,
            width: g.width,
            data: g.data.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.width + col]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn re(&self) -> Grid2D {
        Grid2D::from_vec_unchecked(self.height, self.width, self.data.iter().map(|c| c.re).collect())
    }

    pub fn im(&self) -> Grid2D {
        Grid2D::from_vec_unchecked(self.height, self.width, self.data.iter().map(|c| c.im).collect())
    }

    /// Pointwise product with a real grid of the same dims.
    pub fn mul_real(&self, g: &Grid2D) -> Result<Self> {
        if self.dims() != g.dims() {
            return Err(Error::invalid(format!(
                "dims mismatch: {:?} vs {:?}",
                self.dims(),
                g.dims()
            )));
        }
        let data = self.data.iter().zip(&g.data).map(|(c, &r)| c * r).collect();
        Ok(Self { height: self.height, width: self.width, data })
    }
}

/// An `A x H x W` stack of equally sized channels, stored channel-major.
#[derive(Clone, PartialEq)]
pub struct Tensor3D {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor3D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor3D({}x{}x{})", self.channels, self.height, self.width)
    }
}

impl Tensor3D {
    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::invalid(format!(
                "tensor dims must be >= 1, got {channels}x{height}x{width}"
            )));
        }
        if data.len() != channels * height * width {
            return Err(Error::invalid(format!(
                "tensor {channels}x{height}x{width} needs {} values, got {}",
                channels * height * width,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite value at flat index {i}")));
        }
        Ok(Self { channels, height, width, data })
    }

    pub(crate) fn from_vec_unchecked(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), channels * height * width);
        Self { channels, height, width, data }
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::from_vec_unchecked(channels, height, width, vec![0.0; channels * height * width])
    }

    /// Stacks grids of identical dims.
    pub fn from_grids(grids: &[Grid2D]) -> Result<Self> {
        let first = grids.first().ok_or_else(|| Error::invalid("cannot stack zero grids"))?;
        let (h, w) = first.dims();
        let mut data = Vec::with_capacity(grids.len() * h * w);
        for g in grids {
            if g.dims() != (h, w) {
                return Err(Error::invalid(format!(
                    "channel dims {:?} differ from {:?}",
                    g.dims(),
                    (h, w)
                )));
            }
            data.extend_from_slice(g.as_slice());
        }
        Ok(Self::from_vec_unchecked(grids.len(), h, w, data))
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// `(channels, height, width)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn channel_slice(&self, a: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[a * n..(a + 1) * n]
    }

    pub fn channel(&self, a: usize) -> Grid2D {
        Grid2D::from_vec_unchecked(self.height, self.width, self.channel_slice(a).to_vec())
    }

    pub fn to_grids(&self) -> Vec<Grid2D> {
        (0..self.channels).map(|a| self.channel(a)).collect()
    }
}

/// Resampling kernel used by [`resize`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    Nearest,
    Bilinear,
    Bicubic,
}

fn source_coord(dst: usize, scale: f64) -> f64 {
    // half-pixel centers
    (dst as f64 + 0.5) * scale - 0.5
}

fn nearest_positions(n_in: usize, n_out: usize) -> Vec<usize> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|d| (((d as f64 + 0.5) * scale).floor() as isize).clamp(0, n_in as isize - 1) as usize)
        .collect()
}

/// Four clamped source indices around each output sample plus the fraction.
fn bicubic_positions(n_in: usize, n_out: usize) -> Vec<([usize; 4], f64)> {
    let scale = n_in as f64 / n_out as f64;
    let last = n_in as isize - 1;
    (0..n_out)
        .map(|d| {
            let x = source_coord(d, scale);
            let x0 = x.floor();
            let b = x0 as isize;
            let idx = [-1, 0, 1, 2].map(|k| (b + k).clamp(0, last) as usize);
            (idx, x - x0)
        })
        .collect()
}

/// Keys cubic convolution with a = -1/2 (Catmull-Rom), written on
/// differences from `p1` so constant neighbourhoods come back unchanged.
#[inline]
fn cubic(p: [f64; 4], t: f64) -> f64 {
    let (d0, d2, d3) = (p[0] - p[1], p[2] - p[1], p[3] - p[1]);
    p[1] + 0.5 * t * ((d2 - d0) + t * ((2.0 * d0 + 4.0 * d2 - d3) + t * (d3 - d0 - 3.0 * d2)))
}

/// Bilinear positions as `(lower index, upper index, fraction)`, clamped to the edge.
fn bilinear_positions(n_in: usize, n_out: usize) -> Vec<(usize, usize, f64)> {
    let scale = n_in as f64 / n_out as f64;
    let max = (n_in - 1) as f64;
    (0..n_out)
        .map(|d| {
            let x = source_coord(d, scale).clamp(0.0, max);
            let x0 = x.floor();
            let i0 = x0 as usize;
            let i1 = (i0 + 1).min(n_in - 1);
            (i0, i1, x - x0)
        })
        .collect()
}

/// Resizes `g` to `out_h x out_w` with half-pixel-center sample alignment and
/// edge clamping. Returns an exact copy when the dims are unchanged.
pub fn resize(g: &Grid2D, out_h: usize, out_w: usize, method: Interpolation) -> Result<Grid2D> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::invalid(format!("resize target must be >= 1, got {out_h}x{out_w}")));
    }
    if g.dims() == (out_h, out_w) {
        return Ok(g.clone());
    }
    let (h, w) = g.dims();
    let out = match method {
        Interpolation::Bilinear => {
            let xs = bilinear_positions(w, out_w);
            let ys = bilinear_positions(h, out_h);
            // horizontal pass, then vertical; lerp form keeps constants exact
            let mut tmp = Vec::with_capacity(h * out_w);
            for r in 0..h {
                let row = g.row(r);
                tmp.extend(xs.iter().map(|&(i0, i1, t)| row[i0] + t * (row[i1] - row[i0])));
            }
            let mut out = Vec::with_capacity(out_h * out_w);
            for &(r0, r1, t) in &ys {
                let a = &tmp[r0 * out_w..(r0 + 1) * out_w];
                let b = &tmp[r1 * out_w..(r1 + 1) * out_w];
                out.extend(a.iter().zip(b).map(|(&a, &b)| a + t * (b - a)));
            }
            out
        }
        Interpolation::Nearest => {
            let xs = nearest_positions(w, out_w);
            let ys = nearest_positions(h, out_h);
            let mut out = Vec::with_capacity(out_h * out_w);
            for &r in &ys {
                let row = g.row(r);
                out.extend(xs.iter().map(|&c| row[c]));
            }
            out
        }
        Interpolation::Bicubic => {
            let xs = bicubic_positions(w, out_w);
            let ys = bicubic_positions(h, out_h);
            let mut tmp = Vec::with_capacity(h * out_w);
            for r in 0..h {
                let row = g.row(r);
                tmp.extend(xs.iter().map(|&(i, t)| cubic(i.map(|c| row[c]), t)));
            }
            let mut out = Vec::with_capacity(out_h * out_w);
            for &(rows, t) in &ys {
                out.extend((0..out_w).map(|c| cubic(rows.map(|r| tmp[r * out_w + c]), t)));
            }
            out
        }
    };
    Ok(Grid2D::from_vec_unchecked(out_h, out_w, out))
}

/// Reusable forward and inverse 2-D transforms for one grid size.
#[derive(Clone)]
pub struct Fft2 {
    height: usize,
    width: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(height: usize, width: usize) -> Self {
        let mut planner = FftPlanner::<f64>::new();
        Self {
            height,
            width,
            row_fwd: planner.plan_fft_forward(width),
            col_fwd: planner.plan_fft_forward(height),
            row_inv: planner.plan_fft_inverse(width),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    fn process(&self, data: &mut [Complex64], inverse: bool) {
        let (h, w) = (self.height, self.width);
        let (row_fft, col_fft) =
            if inverse { (&self.row_inv, &self.col_inv) } else { (&self.row_fwd, &self.col_fwd) };
        for row in data.chunks_exact_mut(w) {
            row_fft.process(row);
        }
        let mut col = vec![Complex64::new(0.0, 0.0); h];
        for c in 0..w {
            for r in 0..h {
                col[r] = data[r * w + c];
            }
            col_fft.process(&mut col);
            for r in 0..h {
                data[r * w + c] = col[r];
            }
        }
    }

    fn check(&self, dims: (usize, usize)) {
        assert_eq!(dims, (self.height, self.width), "transform planned for a different size");
    }

    /// Unnormalized forward transform of a real grid.
    pub fn forward(&self, g: &Grid2D) -> ComplexGrid2D {
        self.check(g.dims());
        let mut spec = ComplexGrid2D::from_real(g);
        self.process(&mut spec.data, false);
        spec
    }

    pub fn forward_complex(&self, c: &ComplexGrid2D) -> ComplexGrid2D {
        self.check(c.dims());
        let mut out = c.clone();
        self.process(&mut out.data, false);
        out
    }

    /// Inverse transform including the `1 / (H * W)` factor.
    pub fn inverse(&self, c: &ComplexGrid2D) -> ComplexGrid2D {
        self.check(c.dims());
        let mut out = c.clone();
        self.inverse_in_place(&mut out);
        out
    }

    pub fn inverse_in_place(&self, c: &mut ComplexGrid2D) {
        self.check(c.dims());
        self.process(&mut c.data, true);
        let norm = 1.0 / (self.height * self.width) as f64;
        for v in &mut c.data {
            *v *= norm;
        }
    }
}

/// Unnormalized forward 2-D DFT; bin `(0, 0)` holds the pixel sum.
pub fn dft2(g: &Grid2D) -> ComplexGrid2D {
    Fft2::new(g.height, g.width).forward(g)
}

/// Forward DFT of a complex grid.
pub fn dft2_complex(c: &ComplexGrid2D) -> ComplexGrid2D {
    Fft2::new(c.height, c.width).forward_complex(c)
}

/// Inverse 2-D DFT carrying the `1 / (H * W)` normalization.
pub fn idft2(c: &ComplexGrid2D) -> ComplexGrid2D {
    Fft2::new(c.height, c.width).inverse(c)
}

/// Separable Gaussian blur with edge clamping; the kernel is truncated at `3 sigma`.
pub fn gaussian_blur(g: &Grid2D, sigma: f64) -> Grid2D {
    if !(sigma > 0.0) {
        return g.clone();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);

    let (h, w) = g.dims();
    let pass = |src: &[f64], len: usize, stride: usize, count: usize, step: usize| {
        let mut out = vec![0.0; src.len()];
        for line in 0..count {
            let base = line * step;
            for i in 0..len {
                let mut acc = 0.0;
                for (k, &wt) in kernel.iter().enumerate() {
                    let j = (i as isize + k as isize - radius).clamp(0, len as isize - 1) as usize;
                    acc += wt * src[base + j * stride];
                }
                out[base + i * stride] = acc;
            }
        }
        out
    };
    let horiz = pass(g.as_slice(), w, 1, h, w);
    let vert = pass(&horiz, h, w, w, 1);
    Grid2D::from_vec_unchecked(h, w, vert)
}
