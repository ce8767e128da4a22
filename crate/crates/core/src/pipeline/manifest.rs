//! Layer manifest: JSON index binding per-layer activation files to a run.
//!
//! ```json
//! {"model": "cmrnet-synth", "input_image": "input.png",
//!  "layers": [{"index": 1, "file": "layer_01.npy", "shape": [16, 64, 96]}]}
//! ```
//!
//! Relative paths resolve against the directory holding the manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Tensor3D;
use crate::npy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerEntry {
    pub index: i64,
    pub file: PathBuf,
    /// `[A, H, W]`.
    pub shape: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerManifest {
    pub model: String,
    pub input_image: PathBuf,
    pub layers: Vec<LayerEntry>,
    #[serde(skip)]
    base_dir: Option<PathBuf>,
}

impl LayerManifest {
    pub fn new(model: impl Into<String>, input_image: impl Into<PathBuf>, layers: Vec<LayerEntry>) -> Self {
        Self { model: model.into(), input_image: input_image.into(), layers, base_dir: None }
    }

    /// Parses and validates a manifest; layers come back sorted by index.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut m: LayerManifest = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        m.normalize()?;
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m = Self::from_json(&text)?;
        m.base_dir = path.parent().map(Path::to_path_buf);
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self)?;
        fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    /// Sorts layers by index and checks the schema invariants.
    pub fn normalize(&mut self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Schema("manifest lists no layers".into()));
        }
        self.layers.sort_by_key(|l| l.index);
        for pair in self.layers.windows(2) {
            if pair[0].index == pair[1].index {
                return Err(Error::Schema(format!("duplicate layer index {}", pair[0].index)));
            }
        }
        for l in &self.layers {
            if l.shape.contains(&0) {
                return Err(Error::Schema(format!("layer {}: shape {:?} has a zero dimension", l.index, l.shape)));
            }
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(base) if p.is_relative() => base.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn input_image_path(&self) -> PathBuf {
        self.resolve(&self.input_image)
    }

    /// Loads one layer's activations and checks them against the declared shape.
    pub fn load_layer(&self, entry: &LayerEntry) -> Result<Tensor3D> {
        let wrap = |e: Error| Error::Layer { index: entry.index, source: Box::new(e) };
        let t = npy::load_array(self.resolve(&entry.file)).map_err(wrap)?;
        let (a, h, w) = t.shape();
        if [a, h, w] != entry.shape {
            return Err(wrap(Error::Schema(format!(
                "declared shape {:?} but file holds {:?}",
                entry.shape,
                [a, h, w]
            ))));
        }
        Ok(t)
    }
}
