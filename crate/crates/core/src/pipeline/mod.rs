//! Layer-by-layer explainable reconstruction.
//!
//! For every layer: each activation map is viewed at several scales, matched
//! against the current pool of log-Gabor energy maps by block-variance MAE,
//! rebuilt as an inverse-MAE weighted sum of its best matches, and the scales
//! are fused by root-sum-of-squares. The reconstructions closest to their
//! activations are kept, filtered through the bank again, and become the pool
//! for the next layer. The kept maps of the last layer form the saliency map.
//!
//! Work inside a layer runs in parallel; every reduction runs in a fixed order
//! so results do not depend on the thread count.

mod manifest;
mod trace;

use std::borrow::Cow;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use manifest::{LayerEntry, LayerManifest};
pub use trace::{dump_layer_maps, KeptTrace, LayerTrace, ScaleTrace, Trace};

use crate::blockstats::{block_variance, mae_maps, mae_slices, BlockVarianceGrid, DEFAULT_BLOCK};
use crate::error::{Error, Result};
use crate::grid::{gaussian_blur, Grid2D, Interpolation, Tensor3D};
use crate::imageio::{self, RasterImage};
use crate::loggabor::{respond_all, respond_all_tagged, FilterBank, ResponseSet};
use crate::saliency::SaliencyMap;

/// Scale factors applied to every activation map before matching.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScaleSet {
    factors: Vec<f64>,
}

impl ScaleSet {
    pub fn new(factors: Vec<f64>) -> Result<Self> {
        if factors.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
            return Err(Error::invalid("scale factors must be positive"));
        }
        if !factors.contains(&1.0) {
            return Err(Error::invalid("scale set must contain the identity factor 1"));
        }
        Ok(Self { factors })
    }

    pub fn factors(&self) -> &[f64] {
        &self.factors
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }
}

impl Default for ScaleSet {
    /// Two halvings, the original, and two doublings.
    fn default() -> Self {
        Self { factors: vec![0.25, 0.5, 1.0, 2.0, 4.0] }
    }
}

/// How the kept maps of the last layer are merged into one map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinalCombination {
    #[default]
    Mean,
    Max,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Pool responses blended per activation and scale.
    pub k_filters: usize,
    /// Reconstructions kept per layer.
    pub k_keep: usize,
    pub scales: ScaleSet,
    /// Added to each MAE before inversion.
    pub epsilon: f64,
    /// Scaled maps whose smaller side falls below this are skipped.
    pub min_scaled_dim: usize,
    pub block_size: usize,
    pub combination: FinalCombination,
    /// Gaussian blur applied to the final map; 0 disables it.
    pub blur_sigma: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k_filters: 10,
            k_keep: 10,
            scales: ScaleSet::default(),
            epsilon: 1e-12,
            min_scaled_dim: 8,
            block_size: DEFAULT_BLOCK,
            combination: FinalCombination::Mean,
            blur_sigma: 0.0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_filters == 0 || self.k_keep == 0 {
            return Err(Error::invalid("k_filters and k_keep must be >= 1"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid("epsilon must be > 0"));
        }
        if self.block_size == 0 {
            return Err(Error::invalid("block_size must be >= 1"));
        }
        if !(self.blur_sigma >= 0.0) {
            return Err(Error::invalid("blur_sigma must be >= 0"));
        }
        ScaleSet::new(self.scales.factors.clone()).map(|_| ())
    }
}

/// One selected pool response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchEntry {
    /// Position in the pool.
    pub index: usize,
    pub mae: f64,
    pub weight: f64,
}

/// The best pool matches for one activation at one scale, by ascending MAE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub entries: Vec<MatchEntry>,
}

impl MatchResult {
    pub fn indices(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.index).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.weight).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// A fused reconstruction of one activation map.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructedMap {
    pub grid: Grid2D,
    /// Channel index of the source activation within its layer.
    pub activation: usize,
    /// Mean absolute pixel error against the source activation.
    pub recon_mae: f64,
    /// `(scale factor, matches)` for every scale that was used.
    pub matches: Vec<(f64, MatchResult)>,
}

/// BT.601 luminance in `[0, 1]` of a gray or RGB raster.
pub fn to_luminance(image: &RasterImage) -> Result<Grid2D> {
    let (h, w) = (image.height, image.width);
    let data: Vec<f64> = match image.channels {
        1 => image.data.iter().map(|&v| v as f64 / 255.0).collect(),
        3 => image
            .data
            .chunks_exact(3)
            .map(|px| (0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64) / 255.0)
            .collect(),
        n => return Err(Error::invalid(format!("unsupported channel count {n}; expected 1 or 3"))),
    };
    Grid2D::from_vec(h, w, data)
}

fn scaled_dims((h, w): (usize, usize), factor: f64) -> (usize, usize) {
    (((h as f64 * factor).round() as usize).max(1), ((w as f64 * factor).round() as usize).max(1))
}

/// `(factor, dims)` for every factor that survives the `min_dim` rule.
fn scale_plan(dims: (usize, usize), scales: &ScaleSet, min_dim: usize) -> Vec<(f64, (usize, usize))> {
    scales
        .factors()
        .iter()
        .map(|&f| (f, scaled_dims(dims, f)))
        .filter(|&(f, (h, w))| f == 1.0 || h.min(w) >= min_dim)
        .collect()
}

/// Bilinear copies of `g` at each scale factor. Factors that would shrink the
/// smaller side below `min_dim` are skipped; factor 1 is always kept.
pub fn make_scales(g: &Grid2D, scales: &ScaleSet, min_dim: usize) -> Result<Vec<(f64, Grid2D)>> {
    scale_plan(g.dims(), scales, min_dim)
        .into_iter()
        .map(|(f, (h, w))| Ok((f, g.resize(h, w, Interpolation::Bilinear)?)))
        .collect()
}

/// Picks the `k` smallest MAEs (ties by lower index) and assigns
/// normalized inverse-MAE weights.
fn select_topk(act: &BlockVarianceGrid, pool: &[BlockVarianceGrid], k: usize, epsilon: f64) -> Result<MatchResult> {
    if pool.is_empty() {
        return Err(Error::invalid("response pool is empty"));
    }
    if k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    if k > pool.len() {
        log::warn!("k = {k} exceeds pool size {}; using the whole pool", pool.len());
    }
    let maes: Vec<f64> = pool
        .iter()
        .map(|p| {
            if (p.rows, p.cols, p.block) != (act.rows, act.cols, act.block) {
                return Err(Error::invalid("pool descriptor layout differs from activation"));
            }
            Ok(mae_slices(&act.variances, &p.variances))
        })
        .collect::<Result<_>>()?;
    let mut order: Vec<usize> = (0..maes.len()).collect();
    order.sort_by(|&i, &j| maes[i].total_cmp(&maes[j]).then(i.cmp(&j)));
    order.truncate(k.min(pool.len()));

    let inv: Vec<f64> = order.iter().map(|&i| 1.0 / (maes[i] + epsilon)).collect();
    let mut total = 0.0;
    for v in &inv {
        total += v;
    }
    let entries = order
        .iter()
        .zip(&inv)
        .map(|(&index, &v)| MatchEntry { index, mae: maes[index], weight: v / total })
        .collect();
    Ok(MatchResult { entries })
}

/// Ranks every pool response against `act` by block-variance MAE and keeps
/// the best `k` with normalized inverse-MAE weights. Pool maps must already
/// have `act`'s dims.
pub fn match_topk(act: &Grid2D, pool: &ResponseSet, k: usize, epsilon: f64) -> Result<MatchResult> {
    if pool.dims() != act.dims() {
        return Err(Error::invalid(format!(
            "pool dims {:?} differ from activation {:?}; resize the pool first",
            pool.dims(),
            act.dims()
        )));
    }
    let act_desc = block_variance(act, DEFAULT_BLOCK)?;
    let pool_desc = pool
        .maps()
        .iter()
        .map(|m| block_variance(&m.grid, DEFAULT_BLOCK))
        .collect::<Result<Vec<_>>>()?;
    select_topk(&act_desc, &pool_desc, k, epsilon)
}

fn weighted_sum<'a>(
    m: &MatchResult,
    dims: (usize, usize),
    mut source: impl FnMut(usize) -> Result<Cow<'a, Grid2D>>,
) -> Result<Grid2D> {
    let mut acc = vec![0.0; dims.0 * dims.1];
    for e in &m.entries {
        let f = source(e.index)?;
        if f.dims() != dims {
            return Err(Error::invalid("response dims differ within a reconstruction"));
        }
        for (a, &v) in acc.iter_mut().zip(f.as_slice()) {
            *a += e.weight * v;
        }
    }
    Ok(Grid2D::from_vec_unchecked(dims.0, dims.1, acc))
}

/// Weighted sum of the matched pool responses.
pub fn reconstruct_scale(m: &MatchResult, pool: &ResponseSet) -> Result<Grid2D> {
    if let Some(e) = m.entries.iter().find(|e| e.index >= pool.len()) {
        return Err(Error::invalid(format!("match index {} outside pool of {}", e.index, pool.len())));
    }
    weighted_sum(m, pool.dims(), |i| Ok(Cow::Borrowed(&pool.get(i).grid)))
}

/// Resizes each per-scale reconstruction to `target` and combines them as
/// the pointwise root of the sum of squares.
pub fn fuse_scales(recons: &[(f64, Grid2D)], target: (usize, usize)) -> Result<Grid2D> {
    if recons.is_empty() {
        return Err(Error::invalid("nothing to fuse"));
    }
    let mut acc = vec![0.0; target.0 * target.1];
    for (_, r) in recons {
        let r = r.resize(target.0, target.1, Interpolation::Bilinear)?;
        for (a, &v) in acc.iter_mut().zip(r.as_slice()) {
            *a += v * v;
        }
    }
    Ok(Grid2D::from_vec_unchecked(target.0, target.1, acc.into_iter().map(f64::sqrt).collect()))
}

/// Reconstructs every activation of a layer from `pool` and keeps the
/// `k_keep` best (smallest reconstruction MAE, ties by activation index).
pub fn reconstruct_layer(acts: &Tensor3D, pool: &ResponseSet, cfg: &PipelineConfig) -> Result<Vec<ReconstructedMap>> {
    cfg.validate()?;
    let (count, h, w) = acts.shape();
    let plan = scale_plan((h, w), &cfg.scales, cfg.min_scaled_dim);

    // pool descriptors at each scale's dims; resized maps are not retained
    let pool_desc: Vec<Vec<BlockVarianceGrid>> = plan
        .iter()
        .map(|&(_, (sh, sw))| {
            pool.maps()
                .par_iter()
                .map(|m| block_variance(&m.grid.resize(sh, sw, Interpolation::Bilinear)?, cfg.block_size))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut recons = (0..count)
        .into_par_iter()
        .map(|a| {
            let act = acts.channel(a);
            let mut per_scale = Vec::with_capacity(plan.len());
            let mut matches = Vec::with_capacity(plan.len());
            for (si, &(factor, (sh, sw))) in plan.iter().enumerate() {
                let scaled = act.resize(sh, sw, Interpolation::Bilinear)?;
                let desc = block_variance(&scaled, cfg.block_size)?;
                let m = select_topk(&desc, &pool_desc[si], cfg.k_filters, cfg.epsilon)?;
                let r = weighted_sum(&m, (sh, sw), |i| {
                    Ok(Cow::Owned(pool.get(i).grid.resize(sh, sw, Interpolation::Bilinear)?))
                })?;
                per_scale.push((factor, r));
                matches.push((factor, m));
            }
            let grid = fuse_scales(&per_scale, (h, w))?;
            let recon_mae = mae_maps(&act, &grid)?;
            Ok(ReconstructedMap { grid, activation: a, recon_mae, matches })
        })
        .collect::<Result<Vec<_>>>()?;

    recons.sort_by(|x, y| x.recon_mae.total_cmp(&y.recon_mae).then(x.activation.cmp(&y.activation)));
    recons.truncate(cfg.k_keep);
    Ok(recons)
}

/// Filters every kept map (resized to the bank dims) through the whole bank.
/// The pool is ordered map-major, filter-minor.
pub fn next_response_pool(kept: &[ReconstructedMap], bank: &FilterBank) -> Result<ResponseSet> {
    if kept.is_empty() {
        return Err(Error::invalid("no reconstructed maps to propagate"));
    }
    let (bh, bw) = bank.dims();
    let sets = kept
        .par_iter()
        .map(|k| respond_all_tagged(&k.grid.resize(bh, bw, Interpolation::Bilinear)?, bank, k.activation))
        .collect::<Result<Vec<_>>>()?;
    ResponseSet::new(sets.into_iter().flat_map(|s| s.maps().to_vec()).collect())
}

/// Combines the kept maps, resizes to `out`, optionally blurs, and
/// min-max normalizes into `[0, 1]`.
pub fn finalize_saliency(kept: &[ReconstructedMap], out: (usize, usize), cfg: &PipelineConfig) -> Result<SaliencyMap> {
    let first = kept.first().ok_or_else(|| Error::invalid("no maps to finalize"))?;
    let dims = first.grid.dims();
    if kept.iter().any(|k| k.grid.dims() != dims) {
        return Err(Error::invalid("kept maps differ in size"));
    }
    let n = dims.0 * dims.1;
    let combined = match cfg.combination {
        FinalCombination::Mean => {
            let mut acc = vec![0.0; n];
            for k in kept {
                for (a, &v) in acc.iter_mut().zip(k.grid.as_slice()) {
                    *a += v;
                }
            }
            let count = kept.len() as f64;
            acc.into_iter().map(|v| v / count).collect()
        }
        FinalCombination::Max => {
            let mut acc = vec![f64::NEG_INFINITY; n];
            for k in kept {
                for (a, &v) in acc.iter_mut().zip(k.grid.as_slice()) {
                    *a = a.max(v);
                }
            }
            acc
        }
    };
    let mut g = Grid2D::from_vec_unchecked(dims.0, dims.1, combined).resize(out.0, out.1, Interpolation::Bilinear)?;
    if cfg.blur_sigma > 0.0 {
        g = gaussian_blur(&g, cfg.blur_sigma);
    }
    Ok(SaliencyMap::normalized(&g))
}

/// Final map plus the per-layer trace.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub saliency: SaliencyMap,
    pub trace: Trace,
}

/// Runs the whole reconstruction for one image and manifest.
pub fn run_pipeline(
    image: &RasterImage,
    manifest: &LayerManifest,
    bank: &FilterBank,
    cfg: &PipelineConfig,
) -> Result<PipelineOutput> {
    run_pipeline_with(image, manifest, bank, cfg, |_, _| Ok(()))
}

/// As [`run_pipeline`], calling `on_layer` with each layer's kept maps.
pub fn run_pipeline_with(
    image: &RasterImage,
    manifest: &LayerManifest,
    bank: &FilterBank,
    cfg: &PipelineConfig,
    on_layer: impl FnMut(i64, &[ReconstructedMap]) -> Result<()>,
) -> Result<PipelineOutput> {
    let mut sorted = manifest.clone();
    sorted.normalize()?;
    let lum = to_luminance(image)?;
    let layers = sorted.layers.iter().map(|e| sorted.load_layer(e).map(|t| (e.index, t)));
    run_on_layers(&lum, layers, &sorted.model, bank, cfg, on_layer)
}

/// Core loop over already ordered layers.
pub fn run_on_layers(
    luminance: &Grid2D,
    layers: impl IntoIterator<Item = Result<(i64, Tensor3D)>>,
    model: &str,
    bank: &FilterBank,
    cfg: &PipelineConfig,
    mut on_layer: impl FnMut(i64, &[ReconstructedMap]) -> Result<()>,
) -> Result<PipelineOutput> {
    cfg.validate()?;
    let (bh, bw) = bank.dims();
    let mut pool = respond_all(&luminance.resize(bh, bw, Interpolation::Bilinear)?, bank)?;
    let mut trace = Trace { model: model.to_string(), layers: Vec::new() };
    let mut kept: Option<Vec<ReconstructedMap>> = None;
    let mut last_index: Option<i64> = None;

    let mut iter = layers.into_iter().peekable();
    while let Some(layer) = iter.next() {
        let (index, acts) = layer?;
        if last_index.is_some_and(|prev| index <= prev) {
            return Err(Error::Schema(format!("layer index {index} is not increasing")));
        }
        let wrap = |e: Error| match e {
            e @ Error::Layer { .. } => e,
            e => Error::Layer { index, source: Box::new(e) },
        };
        let layer_kept = reconstruct_layer(&acts, &pool, cfg).map_err(wrap)?;
        on_layer(index, &layer_kept)?;
        trace.layers.push(LayerTrace::new(index, &layer_kept));
        if iter.peek().is_some() {
            pool = next_response_pool(&layer_kept, bank).map_err(wrap)?;
        }
        kept = Some(layer_kept);
        last_index = Some(index);
    }
    let kept = kept.ok_or_else(|| Error::Schema("no layers to process".into()))?;
    let saliency = finalize_saliency(&kept, luminance.dims(), cfg)?;
    Ok(PipelineOutput { saliency, trace })
}

/// Writes the final map as PNG.
pub fn save_saliency(map: &SaliencyMap, path: impl AsRef<std::path::Path>) -> Result<()> {
    imageio::save_image(map, path)
}
