//! Framework-free forward pass of a small CMR-style saliency network:
//! cross-concatenated multi-scale residual blocks, a dilated inception
//! module and a conv/sigmoid/bicubic decoder.
//!
//! Convolutions are cross-correlations with zero "same" padding. Each output
//! pixel accumulates `bias`, then input channels, then kernel rows, then
//! kernel columns, in that order, so results are independent of threading.

mod bundle;

use std::path::Path;

use rayon::prelude::*;

pub use bundle::{load_bundle, save_bundle, synth_weights, BundleEntry, BundleIndex, ChannelPlan, CmrNetWeights};

use crate::error::{Error, Result};
use crate::grid::{Grid2D, Interpolation, Tensor3D};
use crate::npy;
use crate::pipeline::{LayerEntry, LayerManifest};
use crate::saliency::SaliencyMap;

pub const MODEL_TAG: &str = "cmrnet-synth";

#[derive(Debug, Clone, PartialEq)]
pub struct ConvSpec {
    kernel: usize,
    in_channels: usize,
    out_channels: usize,
    dilation: usize,
    /// `(out, in, k, k)`, C order.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl ConvSpec {
    pub fn new(
        kernel: usize,
        in_channels: usize,
        out_channels: usize,
        dilation: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        if ![1, 3, 5].contains(&kernel) {
            return Err(Error::invalid(format!("kernel size {kernel} not in {{1, 3, 5}}")));
        }
        if dilation == 0 || in_channels == 0 || out_channels == 0 {
            return Err(Error::invalid("dilation and channel counts must be >= 1"));
        }
        let expected = out_channels * in_channels * kernel * kernel;
        if weights.len() != expected || bias.len() != out_channels {
            return Err(Error::invalid(format!(
                "conv {out_channels}x{in_channels}x{kernel}x{kernel} needs {expected} weights and {out_channels} biases, got {} and {}",
                weights.len(),
                bias.len()
            )));
        }
        Ok(Self { kernel, in_channels, out_channels, dilation, weights, bias })
    }

    pub fn zeros(kernel: usize, in_channels: usize, out_channels: usize, dilation: usize) -> Result<Self> {
        let n = out_channels * in_channels * kernel * kernel;
        Self::new(kernel, in_channels, out_channels, dilation, vec![0.0; n], vec![0.0; out_channels])
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn dilation(&self) -> usize {
        self.dilation
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn weight(&self, o: usize, i: usize, ky: usize, kx: usize) -> f64 {
        let k = self.kernel;
        self.weights[((o * self.in_channels + i) * k + ky) * k + kx]
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [self.out_channels, self.in_channels, self.kernel, self.kernel]
    }

    pub fn padding(&self) -> usize {
        (self.kernel - 1) * self.dilation / 2
    }
}

pub fn conv2d(x: &Tensor3D, spec: &ConvSpec) -> Result<Tensor3D> {
    let (c, h, w) = x.shape();
    if c != spec.in_channels {
        return Err(Error::invalid(format!("conv expects {} input channels, got {c}", spec.in_channels)));
    }
    let pad = spec.padding() as isize;
    let (hi, wi) = (h as isize, w as isize);
    let planes: Vec<Vec<f64>> = (0..spec.out_channels)
        .into_par_iter()
        .map(|o| {
            let mut acc = vec![spec.bias[o]; h * w];
            for i in 0..c {
                let src = x.channel_slice(i);
                for ky in 0..spec.kernel {
                    let dy = (ky * spec.dilation) as isize - pad;
                    let (r0, r1) = ((-dy).max(0), (hi - dy).min(hi));
                    for kx in 0..spec.kernel {
                        let dx = (kx * spec.dilation) as isize - pad;
                        let (c0, c1) = ((-dx).max(0), (wi - dx).min(wi));
                        if r0 >= r1 || c0 >= c1 {
                            continue;
                        }
                        let wt = spec.weight(o, i, ky, kx);
                        for r in r0..r1 {
                            let dst = &mut acc[(r * wi + c0) as usize..(r * wi + c1) as usize];
                            let s0 = ((r + dy) * wi + c0 + dx) as usize;
                            for (d, &v) in dst.iter_mut().zip(&src[s0..s0 + (c1 - c0) as usize]) {
                                *d += wt * v;
                            }
                        }
                    }
                }
            }
            acc
        })
        .collect();
    Ok(Tensor3D::from_vec_unchecked(spec.out_channels, h, w, planes.concat()))
}

pub fn relu(x: &Tensor3D) -> Tensor3D {
    let (c, h, w) = x.shape();
    Tensor3D::from_vec_unchecked(c, h, w, x.as_slice().iter().map(|&v| v.max(0.0)).collect())
}

/// Depth concatenation in argument order.
pub fn concat(parts: &[&Tensor3D]) -> Result<Tensor3D> {
    let first = parts.first().ok_or_else(|| Error::invalid("nothing to concatenate"))?;
    let (_, h, w) = first.shape();
    let mut data = Vec::new();
    let mut channels = 0;
    for p in parts {
        if (p.height(), p.width()) != (h, w) {
            return Err(Error::invalid("concatenated tensors differ in spatial size"));
        }
        data.extend_from_slice(p.as_slice());
        channels += p.channels();
    }
    Ok(Tensor3D::from_vec_unchecked(channels, h, w, data))
}

pub fn add(a: &Tensor3D, b: &Tensor3D) -> Result<Tensor3D> {
    if a.shape() != b.shape() {
        return Err(Error::invalid(format!("cannot add shapes {:?} and {:?}", a.shape(), b.shape())));
    }
    let (c, h, w) = a.shape();
    Ok(Tensor3D::from_vec_unchecked(c, h, w, a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x + y).collect()))
}

/// 2x2 max-pool with stride 2; an odd trailing row or column is dropped.
pub fn max_pool2(x: &Tensor3D) -> Result<Tensor3D> {
    let (c, h, w) = x.shape();
    if h < 2 || w < 2 {
        return Err(Error::invalid(format!("cannot pool a {h}x{w} map")));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut data = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let s = x.channel_slice(ch);
        for r in 0..oh {
            for col in 0..ow {
                let i = 2 * r * w + 2 * col;
                data.push(s[i].max(s[i + 1]).max(s[i + w]).max(s[i + w + 1]));
            }
        }
    }
    Ok(Tensor3D::from_vec_unchecked(c, oh, ow, data))
}

/// The five convolutions of one CMR block.
#[derive(Debug, Clone, PartialEq)]
pub struct CMRBlockWeights {
    pub t1: ConvSpec,
    pub f1: ConvSpec,
    pub t2: ConvSpec,
    pub f2: ConvSpec,
    /// 1x1 merge back to the block's input width.
    pub merge: ConvSpec,
}

impl CMRBlockWeights {
    /// Zero weights for a block of width `channels` with branch width `branch`.
    pub fn zeros(channels: usize, branch: usize) -> Result<Self> {
        Ok(Self {
            t1: ConvSpec::zeros(3, channels, branch, 1)?,
            f1: ConvSpec::zeros(5, channels, branch, 1)?,
            t2: ConvSpec::zeros(3, 2 * branch, branch, 1)?,
            f2: ConvSpec::zeros(5, 2 * branch, branch, 1)?,
            merge: ConvSpec::zeros(1, 2 * branch, channels, 1)?,
        })
    }

    pub fn channels(&self) -> usize {
        self.t1.in_channels
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.channels();
        let ok = self.f1.in_channels == c
            && (self.t1.kernel, self.f1.kernel, self.t2.kernel, self.f2.kernel, self.merge.kernel) == (3, 5, 3, 5, 1)
            && self.t2.in_channels == self.t1.out_channels + self.f1.out_channels
            && self.f2.in_channels == self.t2.in_channels
            && self.merge.in_channels == self.t2.out_channels + self.f2.out_channels
            && self.merge.out_channels == c;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("CMR block convolutions have inconsistent shapes"))
        }
    }
}

pub fn cmr_forward(m_prev: &Tensor3D, w: &CMRBlockWeights) -> Result<Tensor3D> {
    w.validate()?;
    let t1 = relu(&conv2d(m_prev, &w.t1)?);
    let f1 = relu(&conv2d(m_prev, &w.f1)?);
    let cross = concat(&[&t1, &f1])?;
    let t2 = relu(&conv2d(&cross, &w.t2)?);
    let f2 = relu(&conv2d(&cross, &w.f2)?);
    let o = conv2d(&concat(&[&t2, &f2])?, &w.merge)?;
    add(&o, m_prev)
}

/// Dilated inception module: parallel dilated 3x3 branches, merged by 1x1.
#[derive(Debug, Clone, PartialEq)]
pub struct DIMConfig {
    pub rates: [usize; 3],
    pub branches: [ConvSpec; 3],
    pub merge: ConvSpec,
}

impl DIMConfig {
    pub fn validate(&self) -> Result<()> {
        let [a, b, c] = self.rates;
        if a == 0 || a == b || b == c || a == c {
            return Err(Error::invalid(format!("dilation rates {:?} must be positive and distinct", self.rates)));
        }
        let in_c = self.branches[0].in_channels;
        for (br, &rate) in self.branches.iter().zip(&self.rates) {
            if br.dilation != rate || br.in_channels != in_c {
                return Err(Error::invalid("DIM branch does not match its rate or input width"));
            }
        }
        if self.merge.kernel != 1 || self.merge.in_channels != self.branches.iter().map(|b| b.out_channels).sum::<usize>() {
            return Err(Error::invalid("DIM merge must be 1x1 over the concatenated branches"));
        }
        Ok(())
    }
}

pub fn dim_forward(x: &Tensor3D, cfg: &DIMConfig) -> Result<Tensor3D> {
    cfg.validate()?;
    let outs = cfg.branches.iter().map(|b| conv2d(x, b).map(|t| relu(&t))).collect::<Result<Vec<_>>>()?;
    conv2d(&concat(&outs.iter().collect::<Vec<_>>())?, &cfg.merge)
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Decoder convs with ReLU between them; the single-channel pre-sigmoid map.
pub fn decoder_logits(x: &Tensor3D, specs: &[ConvSpec]) -> Result<Grid2D> {
    let (last, hidden) = specs.split_last().ok_or_else(|| Error::invalid("decoder has no layers"))?;
    if last.out_channels != 1 {
        return Err(Error::invalid("final decoder conv must output one channel"));
    }
    let mut t = x.clone();
    for s in hidden {
        t = relu(&conv2d(&t, s)?);
    }
    Ok(conv2d(&t, last)?.channel(0))
}

/// Sigmoid of the decoder output, bicubically resized to `out` and clamped.
pub fn decoder_forward(x: &Tensor3D, specs: &[ConvSpec], out: (usize, usize)) -> Result<SaliencyMap> {
    let probs = decoder_logits(x, specs)?.map(sigmoid);
    Ok(SaliencyMap::clamped(&probs.resize(out.0, out.1, Interpolation::Bicubic)?))
}

/// Normalizes both maps to unit sum and returns the L1 distance, in `[0, 2]`.
///
/// Pixels where either map is zero contribute `|x|/sp + |y|/sg`; those are
/// summed raw and divided once, so disjoint supports give exactly 2 and
/// identical maps exactly 0.
pub fn loss(p: &Grid2D, g: &Grid2D) -> Result<f64> {
    if p.dims() != g.dims() {
        return Err(Error::invalid(format!("loss on dims {:?} and {:?}", p.dims(), g.dims())));
    }
    let (sp, sg) = (p.sum(), g.sum());
    if !(sp > 0.0) || !(sg > 0.0) {
        return Err(Error::UndefinedNormalization("map sums to zero"));
    }
    let (mut overlap, mut only_p, mut only_g) = (0.0, 0.0, 0.0);
    for (&x, &y) in p.as_slice().iter().zip(g.as_slice()) {
        if x != 0.0 && y != 0.0 {
            overlap += (x / sp - y / sg).abs();
        } else {
            only_p += x.abs();
            only_g += y.abs();
        }
    }
    Ok(overlap + (only_p / sp + only_g / sg))
}

/// A named intermediate tensor captured during the forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedLayer {
    pub name: &'static str,
    pub tensor: Tensor3D,
}

#[derive(Debug, Clone)]
pub struct CmrOutput {
    pub saliency: SaliencyMap,
    /// In forward order: stem, cmr1..3, dim, decoder hidden layers.
    pub layers: Vec<NamedLayer>,
}

impl CmrOutput {
    /// Writes each captured layer as `layer_NN_<name>.npy` (`<f4`) plus
    /// `manifest.json`, and returns the manifest.
    pub fn dump(&self, dir: impl AsRef<Path>, input_image: impl AsRef<Path>) -> Result<LayerManifest> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut entries = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let index = i as i64 + 1;
            let file = format!("layer_{index:02}_{}.npy", layer.name);
            npy::save_array(&layer.tensor, dir.join(&file))?;
            let (a, h, w) = layer.tensor.shape();
            entries.push(LayerEntry { index, file: file.into(), shape: [a, h, w] });
        }
        let manifest = LayerManifest::new(MODEL_TAG, input_image.as_ref(), entries);
        manifest.save(dir.join("manifest.json"))?;
        LayerManifest::load(dir.join("manifest.json"))
    }
}

/// luminance -> stem -> [CMR -> pool] x3 (1x1 lifts between) -> DIM -> decoder.
pub fn cmrnet_forward(luminance: &Grid2D, w: &CmrNetWeights) -> Result<CmrOutput> {
    let (h, wd) = luminance.dims();
    let mut layers = Vec::new();
    let input = Tensor3D::from_grids(std::slice::from_ref(luminance))?;

    let mut x = relu(&conv2d(&input, &w.stem)?);
    layers.push(NamedLayer { name: "stem", tensor: x.clone() });
    const NAMES: [&str; 3] = ["cmr1", "cmr2", "cmr3"];
    for (b, block) in w.blocks.iter().enumerate() {
        if b > 0 {
            x = conv2d(&x, &w.lifts[b - 1])?;
        }
        x = cmr_forward(&x, block)?;
        layers.push(NamedLayer { name: NAMES[b], tensor: x.clone() });
        x = max_pool2(&x)?;
    }
    x = dim_forward(&x, &w.dim)?;
    layers.push(NamedLayer { name: "dim", tensor: x.clone() });

    let (last, hidden) = w.decoder.split_last().ok_or_else(|| Error::invalid("decoder has no layers"))?;
    for s in hidden {
        x = relu(&conv2d(&x, s)?);
        layers.push(NamedLayer { name: "decoder", tensor: x.clone() });
    }
    let saliency = decoder_forward(&x, std::slice::from_ref(last), (h, wd))?;
    Ok(CmrOutput { saliency, layers })
}

#[cfg(test)]
mod tests;
