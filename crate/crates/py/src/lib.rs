//! Python bindings. Maps cross the boundary as nested lists (`list[list[float]]`,
//! row-major); wrap them with `numpy.asarray` on the Python side.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use xsal_core::blockstats;
use xsal_core::cmr::{self, ChannelPlan};
use xsal_core::imageio::load_image;
use xsal_core::loggabor::{self, ResponseSet};
use xsal_core::metrics::{self, FixationSet};
use xsal_core::npy::{self, NpyDtype};
use xsal_core::pipeline::{self as core_pipeline, FinalCombination, LayerManifest, ScaleSet};
use xsal_core::{Error, Grid2D, Tensor3D};

type Rows = Vec<Vec<f64>>;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        Error::Layer { ref source, .. } if matches!(**source, Error::Io { .. }) => PyOSError::new_err(e.to_string()),
        Error::InvalidArgument(_)
        | Error::DegenerateBandwidth(_)
        | Error::UndefinedNormalization(_)
        | Error::UndefinedCorrelation(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn grid_from(rows: Rows) -> PyResult<Grid2D> {
    let h = rows.len();
    let w = rows.first().map_or(0, Vec::len);
    if h == 0 || w == 0 {
        return Err(PyValueError::new_err("map must be a non-empty list of rows"));
    }
    if rows.iter().any(|r| r.len() != w) {
        return Err(PyValueError::new_err("map rows have different lengths"));
    }
    Grid2D::from_vec(h, w, rows.concat()).map_err(py_err)
}

fn grid_to(g: &Grid2D) -> Rows {
    (0..g.height()).map(|r| g.row(r).to_vec()).collect()
}

fn pool_from(maps: Vec<Rows>) -> PyResult<ResponseSet> {
    let grids = maps.into_iter().map(grid_from).collect::<PyResult<Vec<_>>>()?;
    ResponseSet::from_grids(grids).map_err(py_err)
}

fn fixations(dims: (usize, usize), points: Vec<(usize, usize)>) -> PyResult<FixationSet> {
    FixationSet::new(dims, points).map_err(py_err)
}

/// Log-Gabor filter bank sampled on an `height x width` frequency lattice.
#[pyclass(module = "xsal")]
struct FilterBank(loggabor::FilterBank);

#[pymethods]
impl FilterBank {
    #[new]
    #[pyo3(signature = (height, width, orientations = 5, wavelengths = 4, sigmas = 4))]
    fn new(height: usize, width: usize, orientations: usize, wavelengths: usize, sigmas: usize) -> PyResult<Self> {
        let params = loggabor::bank_params(orientations, wavelengths, sigmas);
        Ok(Self(loggabor::build_bank(&params, height, width).map_err(py_err)?))
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.0)
    }

    #[getter]
    fn dims(&self) -> (usize, usize) {
        self.0.dims()
    }

    /// `(theta0, lambda0, sigma_f, sigma_theta)` per filter, in bank order.
    fn params(&self) -> Vec<(f64, f64, f64, f64)> {
        self.0.filters().iter().map(|f| (f.params.theta0, f.params.lambda0, f.params.sigma_f, f.params.sigma_theta)).collect()
    }

    /// Transfer grid of filter `index` in DFT bin order.
    fn transfer(&self, index: usize) -> PyResult<Rows> {
        if index >= self.0.len() {
            return Err(PyValueError::new_err(format!("filter {index} outside bank of {}", self.0.len())));
        }
        Ok(grid_to(&self.0.filter(index).transfer))
    }

    /// Energy response of `image` (bank dims) through every filter.
    fn respond(&self, image: Rows) -> PyResult<Vec<Rows>> {
        let set = loggabor::respond_all(&grid_from(image)?, &self.0).map_err(py_err)?;
        Ok(set.iter().map(|m| grid_to(&m.grid)).collect())
    }

    fn export(&self, dir: PathBuf) -> PyResult<()> {
        self.0.export(dir).map_err(py_err)
    }
}

/// Reconstruction settings; every field is readable and writable.
#[pyclass(module = "xsal", get_all, set_all, from_py_object)]
#[derive(Clone)]
struct PipelineConfig {
    k_filters: usize,
    k_keep: usize,
    scales: Vec<f64>,
    epsilon: f64,
    min_scaled_dim: usize,
    block_size: usize,
    /// "mean" or "max".
    combination: String,
    blur_sigma: f64,
}

impl PipelineConfig {
    fn to_core(&self) -> PyResult<core_pipeline::PipelineConfig> {
        let combination = match self.combination.as_str() {
            "mean" => FinalCombination::Mean,
            "max" => FinalCombination::Max,
            other => return Err(PyValueError::new_err(format!("combination must be 'mean' or 'max', got '{other}'"))),
        };
        let cfg = core_pipeline::PipelineConfig {
            k_filters: self.k_filters,
            k_keep: self.k_keep,
            scales: ScaleSet::new(self.scales.clone()).map_err(py_err)?,
            epsilon: self.epsilon,
            min_scaled_dim: self.min_scaled_dim,
            block_size: self.block_size,
            combination,
            blur_sigma: self.blur_sigma,
        };
        cfg.validate().map_err(py_err)?;
        Ok(cfg)
    }
}

#[pymethods]
impl PipelineConfig {
    #[new]
    #[pyo3(signature = (**kwargs))]
    fn new(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let d = core_pipeline::PipelineConfig::default();
        let mut cfg = Self {
            k_filters: d.k_filters,
            k_keep: d.k_keep,
            scales: d.scales.factors().to_vec(),
            epsilon: d.epsilon,
            min_scaled_dim: d.min_scaled_dim,
            block_size: d.block_size,
            combination: "mean".into(),
            blur_sigma: d.blur_sigma,
        };
        if let Some(kwargs) = kwargs {
            for (key, value) in kwargs.iter() {
                let key: String = key.extract()?;
                match key.as_str() {
                    "k_filters" => cfg.k_filters = value.extract()?,
                    "k_keep" => cfg.k_keep = value.extract()?,
                    "scales" => cfg.scales = value.extract()?,
                    "epsilon" => cfg.epsilon = value.extract()?,
                    "min_scaled_dim" => cfg.min_scaled_dim = value.extract()?,
                    "block_size" => cfg.block_size = value.extract()?,
                    "combination" => cfg.combination = value.extract()?,
                    "blur_sigma" => cfg.blur_sigma = value.extract()?,
                    other => return Err(PyValueError::new_err(format!("unknown setting '{other}'"))),
                }
            }
        }
        cfg.to_core()?;
        Ok(cfg)
    }

    fn __repr__(&self) -> String {
        format!(
            "PipelineConfig(k_filters={}, k_keep={}, scales={:?}, epsilon={:e}, min_scaled_dim={}, block_size={}, combination='{}', blur_sigma={})",
            self.k_filters, self.k_keep, self.scales, self.epsilon, self.min_scaled_dim, self.block_size, self.combination, self.blur_sigma
        )
    }
}

fn config_or_default(config: Option<PipelineConfig>) -> PyResult<core_pipeline::PipelineConfig> {
    match config {
        Some(c) => c.to_core(),
        None => Ok(core_pipeline::PipelineConfig::default()),
    }
}

/// Luminance of an image file, scaled to `[0, 1]`.
#[pyfunction]
fn luminance(path: PathBuf) -> PyResult<Rows> {
    let img = load_image(path).map_err(py_err)?;
    Ok(grid_to(&core_pipeline::to_luminance(&img).map_err(py_err)?))
}

/// Population variance of each `block x block` tile (edge tiles partial).
#[pyfunction]
#[pyo3(signature = (map, block = 8))]
fn block_variance(map: Rows, block: usize) -> PyResult<Rows> {
    let v = blockstats::block_variance(&grid_from(map)?, block).map_err(py_err)?;
    Ok(v.variances.chunks(v.cols).map(<[f64]>::to_vec).collect())
}

/// The `k` pool maps closest to `act` as `(index, mae, weight)`.
#[pyfunction]
#[pyo3(signature = (act, pool, k = 10, epsilon = 1e-12))]
fn match_topk(act: Rows, pool: Vec<Rows>, k: usize, epsilon: f64) -> PyResult<Vec<(usize, f64, f64)>> {
    let m = core_pipeline::match_topk(&grid_from(act)?, &pool_from(pool)?, k, epsilon).map_err(py_err)?;
    Ok(m.entries.iter().map(|e| (e.index, e.mae, e.weight)).collect())
}

/// Root-sum-of-squares fusion of `(factor, map)` pairs at `target` dims.
#[pyfunction]
fn fuse_scales(recons: Vec<(f64, Rows)>, target: (usize, usize)) -> PyResult<Rows> {
    let recons = recons.into_iter().map(|(f, g)| Ok((f, grid_from(g)?))).collect::<PyResult<Vec<_>>>()?;
    Ok(grid_to(&core_pipeline::fuse_scales(&recons, target).map_err(py_err)?))
}

/// Reconstructs each activation map from the pool and returns the kept ones
/// as dicts with `activation`, `recon_mae`, `map` and per-scale `matches`.
#[pyfunction]
#[pyo3(signature = (acts, pool, config = None))]
fn reconstruct_layer<'py>(
    py: Python<'py>,
    acts: Vec<Rows>,
    pool: Vec<Rows>,
    config: Option<PipelineConfig>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let grids = acts.into_iter().map(grid_from).collect::<PyResult<Vec<_>>>()?;
    let acts = Tensor3D::from_grids(&grids).map_err(py_err)?;
    let cfg = config_or_default(config)?;
    let kept = core_pipeline::reconstruct_layer(&acts, &pool_from(pool)?, &cfg).map_err(py_err)?;
    kept.iter()
        .map(|k| {
            let d = PyDict::new(py);
            d.set_item("activation", k.activation)?;
            d.set_item("recon_mae", k.recon_mae)?;
            d.set_item("map", grid_to(&k.grid))?;
            let matches: Vec<(f64, Vec<usize>, Vec<f64>)> =
                k.matches.iter().map(|(f, m)| (*f, m.indices(), m.weights())).collect();
            d.set_item("matches", matches)?;
            Ok(d)
        })
        .collect()
}

/// Runs the reconstruction over a layer manifest; returns `(saliency, trace_json)`.
#[pyfunction]
#[pyo3(signature = (manifest, image = None, config = None))]
fn explain(manifest: PathBuf, image: Option<PathBuf>, config: Option<PipelineConfig>) -> PyResult<(Rows, String)> {
    let manifest = LayerManifest::load(manifest).map_err(py_err)?;
    let img = load_image(image.unwrap_or_else(|| manifest.input_image_path())).map_err(py_err)?;
    let cfg = config_or_default(config)?;
    let bank = loggabor::FilterBank::default_at(img.height, img.width).map_err(py_err)?;
    let out = core_pipeline::run_pipeline(&img, &manifest, &bank, &cfg).map_err(py_err)?;
    Ok((grid_to(out.saliency.grid()), out.trace.to_json().map_err(py_err)?))
}

/// Runs the seeded reference network on an image and dumps its layers to
/// `out`; returns the manifest path.
#[pyfunction]
#[pyo3(signature = (image, out, seed = 7))]
fn synth(image: PathBuf, out: PathBuf, seed: u64) -> PyResult<PathBuf> {
    let lum = core_pipeline::to_luminance(&load_image(&image).map_err(py_err)?).map_err(py_err)?;
    let weights = cmr::synth_weights(seed, &ChannelPlan::default()).map_err(py_err)?;
    let result = cmr::cmrnet_forward(&lum, &weights).map_err(py_err)?;
    let image = std::path::absolute(&image).map_err(|e| PyOSError::new_err(e.to_string()))?;
    result.dump(&out, image).map_err(py_err)?;
    Ok(out.join("manifest.json"))
}

/// Unit-sum L1 distance between two nonnegative maps, in `[0, 2]`.
#[pyfunction]
fn cmr_loss(p: Rows, g: Rows) -> PyResult<f64> {
    cmr::loss(&grid_from(p)?, &grid_from(g)?).map_err(py_err)
}

#[pyfunction]
fn sim(pred: Rows, gt: Rows) -> PyResult<f64> {
    metrics::sim(&grid_from(pred)?, &grid_from(gt)?).map_err(py_err)
}

#[pyfunction]
fn cc(pred: Rows, gt: Rows) -> PyResult<f64> {
    metrics::cc(&grid_from(pred)?, &grid_from(gt)?).map_err(py_err)
}

/// AUC with `(row, col)` fixations as positives and all other pixels as negatives.
#[pyfunction]
fn auc_judd(pred: Rows, fixations_rc: Vec<(usize, usize)>) -> PyResult<f64> {
    let pred = grid_from(pred)?;
    metrics::auc_judd(&pred, &fixations(pred.dims(), fixations_rc)?).map_err(py_err)
}

/// Shuffled AUC with the map values at `negatives` as the negative set.
#[pyfunction]
fn sauc(pred: Rows, fixations_rc: Vec<(usize, usize)>, negatives: Vec<(usize, usize)>) -> PyResult<f64> {
    let pred = grid_from(pred)?;
    let (fix, neg) = (fixations(pred.dims(), fixations_rc)?, fixations(pred.dims(), negatives)?);
    metrics::sauc(&pred, &fix, &neg).map_err(py_err)
}

/// Reads a `<f4`/`<f8` array file as `(shape, flat_data)`.
#[pyfunction]
fn load_npy(path: PathBuf) -> PyResult<(Vec<usize>, Vec<f64>)> {
    let a = npy::load_raw(path).map_err(py_err)?;
    Ok((a.shape, a.data))
}

#[pyfunction]
#[pyo3(signature = (path, shape, data, dtype = "<f8"))]
fn save_npy(path: PathBuf, shape: Vec<usize>, data: Vec<f64>, dtype: &str) -> PyResult<()> {
    let dtype = match dtype {
        "<f8" | "float64" => NpyDtype::F64,
        "<f4" | "float32" => NpyDtype::F32,
        other => return Err(PyValueError::new_err(format!("dtype must be '<f4' or '<f8', got '{other}'"))),
    };
    npy::save_raw(&shape, &data, path, dtype).map_err(py_err)
}

#[pymodule]
pub fn xsal(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<FilterBank>()?;
    m.add_class::<PipelineConfig>()?;
    m.add_function(wrap_pyfunction!(luminance, m)?)?;
    m.add_function(wrap_pyfunction!(block_variance, m)?)?;
    m.add_function(wrap_pyfunction!(match_topk, m)?)?;
    m.add_function(wrap_pyfunction!(fuse_scales, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruct_layer, m)?)?;
    m.add_function(wrap_pyfunction!(explain, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(cmr_loss, m)?)?;
    m.add_function(wrap_pyfunction!(sim, m)?)?;
    m.add_function(wrap_pyfunction!(cc, m)?)?;
    m.add_function(wrap_pyfunction!(auc_judd, m)?)?;
    m.add_function(wrap_pyfunction!(sauc, m)?)?;
    m.add_function(wrap_pyfunction!(load_npy, m)?)?;
    m.add_function(wrap_pyfunction!(save_npy, m)?)?;
    Ok(())
}
