//! Per-layer record of which reconstructions were kept and how they were built.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imageio;

use super::{MatchResult, ReconstructedMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleTrace {
    pub scale: f64,
    pub indices: Vec<usize>,
    pub maes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl ScaleTrace {
    pub(crate) fn from_match(scale: f64, m: &MatchResult) -> Self {
        Self {
            scale,
            indices: m.entries.iter().map(|e| e.index).collect(),
            maes: m.entries.iter().map(|e| e.mae).collect(),
            weights: m.entries.iter().map(|e| e.weight).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeptTrace {
    pub a: usize,
    pub recon_mae: f64,
    pub matches_per_scale: Vec<ScaleTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerTrace {
    pub index: i64,
    pub kept: Vec<KeptTrace>,
}

impl LayerTrace {
    pub(crate) fn new(index: i64, kept: &[ReconstructedMap]) -> Self {
        Self {
            index,
            kept: kept
                .iter()
                .map(|k| KeptTrace {
                    a: k.activation,
                    recon_mae: k.recon_mae,
                    matches_per_scale: k.matches.iter().map(|(s, m)| ScaleTrace::from_match(*s, m)).collect(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trace {
    pub model: String,
    pub layers: Vec<LayerTrace>,
}

impl Trace {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes `trace.json` into `dir`, creating it if needed.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("trace.json");
        fs::write(&path, self.to_json()? + "\n").map_err(|e| Error::io(&path, e))
    }
}

/// Dumps the kept reconstructions of one layer as PNGs named `layer{index}_a{a}.png`.
pub fn dump_layer_maps(dir: impl AsRef<Path>, index: i64, kept: &[ReconstructedMap]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for k in kept {
        imageio::save_image(&k.grid, dir.join(format!("layer{index}_a{}.png", k.activation)))?;
    }
    Ok(())
}
