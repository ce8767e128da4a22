//! Network weights: channel plan, seeded synthesis and on-disk bundles.
//!
//! A bundle directory holds one `<f8` array per tensor plus `index.json`:
//! `{"plan": {...}, "tensors": [{"name", "shape", "role", "file"}]}`.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CMRBlockWeights, ConvSpec, DIMConfig};
use crate::error::{Error, Result};
use crate::npy::{self, NpyDtype};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelPlan {
    /// Width of each CMR block; the stem outputs `blocks[0]`, and 1x1
    /// lifts map between consecutive widths.
    pub blocks: [usize; 3],
    pub dim_rates: [usize; 3],
    pub dim_branch: usize,
    pub decoder_hidden: usize,
}

impl Default for ChannelPlan {
    fn default() -> Self {
        Self { blocks: [16, 32, 64], dim_rates: [4, 8, 16], dim_branch: 32, decoder_hidden: 32 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmrNetWeights {
    pub plan: ChannelPlan,
    pub stem: ConvSpec,
    pub blocks: Vec<CMRBlockWeights>,
    pub lifts: Vec<ConvSpec>,
    pub dim: DIMConfig,
    pub decoder: Vec<ConvSpec>,
}

#[derive(Debug, Clone, Copy)]
struct Shape {
    kernel: usize,
    in_c: usize,
    out_c: usize,
    dilation: usize,
}

const fn shape(kernel: usize, in_c: usize, out_c: usize, dilation: usize) -> Shape {
    Shape { kernel, in_c, out_c, dilation }
}

/// Builds every convolution in a fixed order, asking `make` for each.
fn build(plan: &ChannelPlan, mut make: impl FnMut(&str, Shape) -> Result<ConvSpec>) -> Result<CmrNetWeights> {
    let [c1, c2, c3] = plan.blocks;
    if plan.blocks.contains(&0) || plan.dim_branch == 0 || plan.decoder_hidden == 0 {
        return Err(Error::invalid("channel plan widths must be >= 1"));
    }
    let stem = make("stem", shape(3, 1, c1, 1))?;
    let mut blocks = Vec::with_capacity(3);
    for (b, &c) in plan.blocks.iter().enumerate() {
        let p = format!("cmr{}", b + 1);
        blocks.push(CMRBlockWeights {
            t1: make(&format!("{p}.t1"), shape(3, c, c, 1))?,
            f1: make(&format!("{p}.f1"), shape(5, c, c, 1))?,
            t2: make(&format!("{p}.t2"), shape(3, 2 * c, c, 1))?,
            f2: make(&format!("{p}.f2"), shape(5, 2 * c, c, 1))?,
            merge: make(&format!("{p}.merge"), shape(1, 2 * c, c, 1))?,
        });
    }
    let lifts = vec![make("lift1", shape(1, c1, c2, 1))?, make("lift2", shape(1, c2, c3, 1))?];
    let [ra, rb, rc] = plan.dim_rates;
    let db = plan.dim_branch;
    let dim = DIMConfig {
        rates: plan.dim_rates,
        branches: [
            make(&format!("dim.d{ra}"), shape(3, c3, db, ra))?,
            make(&format!("dim.d{rb}"), shape(3, c3, db, rb))?,
            make(&format!("dim.d{rc}"), shape(3, c3, db, rc))?,
        ],
        merge: make("dim.merge", shape(1, 3 * db, c3, 1))?,
    };
    dim.validate()?;
    let decoder = vec![
        make("decoder.hidden", shape(3, c3, plan.decoder_hidden, 1))?,
        make("decoder.out", shape(1, plan.decoder_hidden, 1, 1))?,
    ];
    let w = CmrNetWeights { plan: plan.clone(), stem, blocks, lifts, dim, decoder };
    for b in &w.blocks {
        b.validate()?;
    }
    Ok(w)
}

impl CmrNetWeights {
    /// `(name, conv)` for every convolution, in build order.
    pub fn named_convs(&self) -> Vec<(String, &ConvSpec)> {
        let mut out = vec![("stem".to_string(), &self.stem)];
        for (b, blk) in self.blocks.iter().enumerate() {
            let p = format!("cmr{}", b + 1);
            for (n, c) in [("t1", &blk.t1), ("f1", &blk.f1), ("t2", &blk.t2), ("f2", &blk.f2), ("merge", &blk.merge)] {
                out.push((format!("{p}.{n}"), c));
            }
        }
        out.push(("lift1".into(), &self.lifts[0]));
        out.push(("lift2".into(), &self.lifts[1]));
        for (rate, br) in self.dim.rates.iter().zip(&self.dim.branches) {
            out.push((format!("dim.d{rate}"), br));
        }
        out.push(("dim.merge".into(), &self.dim.merge));
        out.push(("decoder.hidden".into(), &self.decoder[0]));
        out.push(("decoder.out".into(), &self.decoder[1]));
        out
    }

    /// All weights and biases set to zero.
    pub fn zeros(plan: &ChannelPlan) -> Result<Self> {
        build(plan, |_, s| ConvSpec::zeros(s.kernel, s.in_c, s.out_c, s.dilation))
    }
}

/// Seeded weights: every weight and bias is drawn from uniform `[-a, a]`
/// with `a = sqrt(1 / (in * k^2))`, from a ChaCha8 stream consumed in
/// build order.
pub fn synth_weights(seed: u64, plan: &ChannelPlan) -> Result<CmrNetWeights> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    build(plan, |_, s| {
        let a = (1.0 / (s.in_c * s.kernel * s.kernel) as f64).sqrt();
        let n = s.out_c * s.in_c * s.kernel * s.kernel;
        let weights = (0..n).map(|_| rng.random_range(-a..=a)).collect();
        let bias = (0..s.out_c).map(|_| rng.random_range(-a..=a)).collect();
        ConvSpec::new(s.kernel, s.in_c, s.out_c, s.dilation, weights, bias)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// `"weight"` or `"bias"`.
    pub role: String,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleIndex {
    pub plan: ChannelPlan,
    pub tensors: Vec<BundleEntry>,
}

pub fn save_bundle(w: &CmrNetWeights, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tensors = Vec::new();
    for (name, conv) in w.named_convs() {
        for (role, shape, data) in [
            ("weight", conv.weight_shape().to_vec(), conv.weights()),
            ("bias", vec![conv.out_channels()], conv.bias()),
        ] {
            let file = format!("{name}.{role}.npy");
            npy::save_raw(&shape, data, dir.join(&file), NpyDtype::F64)?;
            tensors.push(BundleEntry { name: format!("{name}.{role}"), shape, role: role.into(), file });
        }
    }
    let index = BundleIndex { plan: w.plan.clone(), tensors };
    let path = dir.join("index.json");
    fs::write(&path, serde_json::to_string_pretty(&index)? + "\n").map_err(|e| Error::io(&path, e))
}

pub fn load_bundle(dir: impl AsRef<Path>) -> Result<CmrNetWeights> {
    let dir = dir.as_ref();
    let path = dir.join("index.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let index: BundleIndex = serde_json::from_str(&text).map_err(|e| Error::Schema(format!("bundle index: {e}")))?;
    let by_name: HashMap<&str, &BundleEntry> = index.tensors.iter().map(|t| (t.name.as_str(), t)).collect();

    let fetch = |name: String, expected: Vec<usize>| -> Result<Vec<f64>> {
        let entry = by_name.get(name.as_str()).ok_or_else(|| Error::Schema(format!("bundle lacks tensor '{name}'")))?;
        if entry.shape != expected {
            return Err(Error::Schema(format!("'{name}' declared {:?}, expected {expected:?}", entry.shape)));
        }
        let arr = npy::load_raw(dir.join(&entry.file))?;
        if arr.shape != expected {
            return Err(Error::Schema(format!("'{name}' file holds {:?}, expected {expected:?}", arr.shape)));
        }
        Ok(arr.data)
    };
    build(&index.plan, |name, s| {
        let weights = fetch(format!("{name}.weight"), vec![s.out_c, s.in_c, s.kernel, s.kernel])?;
        let bias = fetch(format!("{name}.bias"), vec![s.out_c])?;
        ConvSpec::new(s.kernel, s.in_c, s.out_c, s.dilation, weights, bias)
    })
}
