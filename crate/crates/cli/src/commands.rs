use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use xsal_core::blockstats::DEFAULT_BLOCK;
use xsal_core::cmr::{cmrnet_forward, load_bundle, save_bundle, synth_weights, ChannelPlan};
use xsal_core::imageio::{load_image, save_image};
use xsal_core::loggabor::{bank_params, build_bank, respond_all, FilterBank};
use xsal_core::metrics::{evaluate, load_map, EvalReport, FixationSet};
use xsal_core::npy::{self, NpyDtype};
use xsal_core::pipeline::{
    dump_layer_maps, run_pipeline_with, to_luminance, FinalCombination, LayerManifest, PipelineConfig, ScaleSet,
};
use xsal_core::{Error, Interpolation};

use crate::{BankArgs, Combination, EvalArgs, ExplainArgs, Failure, SynthArgs};

type CmdResult = Result<(), Failure>;

fn ensure_parent(path: &Path) -> Result<(), Error> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => {
            fs::create_dir_all(p).map_err(|e| Error::Io { path: p.to_path_buf(), source: e })
        }
        _ => Ok(()),
    }
}

pub fn bank(a: &BankArgs) -> CmdResult {
    if a.orientations == 0 || a.wavelengths == 0 || a.sigmas == 0 {
        return Err(Failure::usage("--orientations, --wavelengths and --sigmas must be >= 1"));
    }
    let bank = build_bank(&bank_params(a.orientations, a.wavelengths, a.sigmas), a.height, a.width)?;
    bank.export(&a.out)?;
    if let Some(img) = &a.image {
        let lum = to_luminance(&load_image(img)?)?.resize(a.height, a.width, Interpolation::Bilinear)?;
        let dir = a.out.join("responses");
        fs::create_dir_all(&dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
        for (i, m) in respond_all(&lum, &bank)?.iter().enumerate() {
            npy::save_grid(&m.grid, dir.join(format!("energy_{i:03}.npy")), NpyDtype::F64)?;
        }
    }
    log::info!("wrote {} filters to {}", bank.len(), a.out.display());
    Ok(())
}

pub fn explain(a: &ExplainArgs) -> CmdResult {
    let manifest = LayerManifest::load(&a.manifest)?;
    let image_path = a.image.clone().unwrap_or_else(|| manifest.input_image_path());
    let image = load_image(&image_path)?;
    let cfg = PipelineConfig {
        k_filters: a.k,
        k_keep: a.keep,
        scales: ScaleSet::new(a.scales.clone())?,
        epsilon: a.eps,
        min_scaled_dim: a.min_scaled_dim,
        block_size: DEFAULT_BLOCK,
        combination: match a.combination {
            Combination::Mean => FinalCombination::Mean,
            Combination::Max => FinalCombination::Max,
        },
        blur_sigma: a.blur,
    };
    cfg.validate()?;
    let bank = FilterBank::default_at(image.height, image.width)?;
    let out = run_pipeline_with(&image, &manifest, &bank, &cfg, |index, kept| {
        log::info!("layer {index}: kept {} maps", kept.len());
        match &a.trace {
            Some(dir) => dump_layer_maps(dir, index, kept),
            None => Ok(()),
        }
    })?;

    ensure_parent(&a.out)?;
    if a.out.extension().is_some_and(|e| e.eq_ignore_ascii_case("npy")) {
        npy::save_grid(&out.saliency, &a.out, NpyDtype::F64)?;
    } else {
        save_image(&out.saliency, &a.out)?;
    }
    if let Some(dir) = &a.trace {
        out.trace.write(dir)?;
    }
    Ok(())
}

pub fn synth(a: &SynthArgs) -> CmdResult {
    let image = load_image(&a.image)?;
    let lum = to_luminance(&image)?;
    let weights = match &a.weights {
        Some(dir) => load_bundle(dir)?,
        None => synth_weights(a.seed, &ChannelPlan::default())?,
    };
    if let Some(dir) = &a.save_weights {
        save_bundle(&weights, dir)?;
    }
    let out = cmrnet_forward(&lum, &weights)?;

    fs::create_dir_all(&a.out).map_err(|e| Error::Io { path: a.out.clone(), source: e })?;
    let ext = a.image.extension().and_then(|e| e.to_str()).unwrap_or("png");
    let input_name = format!("input.{ext}");
    let input_copy = a.out.join(&input_name);
    fs::copy(&a.image, &input_copy).map_err(|e| Error::Io { path: input_copy, source: e })?;
    let manifest = out.dump(&a.out, &input_name)?;
    save_image(&out.saliency, a.out.join("cmr_saliency.png"))?;
    println!("{}", a.out.join("manifest.json").display());
    log::info!("dumped {} layers", manifest.layers.len());
    Ok(())
}

/// Files in `dir` with one of `exts`, keyed by stem.
fn by_stem(dir: &Path, exts: &[&str]) -> Result<BTreeMap<String, PathBuf>, Failure> {
    let entries = fs::read_dir(dir).map_err(|e| Failure::usage(format!("{}: {e}", dir.display())))?;
    let mut out = BTreeMap::new();
    for entry in entries.flatten() {
        let path = entry.path();
        let (Some(stem), Some(ext)) = (path.file_stem().and_then(|s| s.to_str()), path.extension().and_then(|e| e.to_str()))
        else {
            continue;
        };
        if stem.starts_with('.') || !exts.iter().any(|x| x.eq_ignore_ascii_case(ext)) {
            continue;
        }
        if let Some(prev) = out.insert(stem.to_string(), path.clone()) {
            return Err(Failure::usage(format!("ambiguous stem '{stem}': {} and {}", prev.display(), path.display())));
        }
    }
    Ok(out)
}

pub fn eval(a: &EvalArgs) -> CmdResult {
    const MAPS: [&str; 4] = ["png", "jpg", "jpeg", "npy"];
    let preds = by_stem(&a.pred_dir, &MAPS)?;
    let gts = by_stem(&a.gt_map_dir, &MAPS)?;
    let fixes = by_stem(&a.fix_dir, &["json"])?;
    let neg = a.neg_fix.as_ref().map(FixationSet::load).transpose()?;

    let mut matched = Vec::new();
    let mut unmatched = Vec::new();
    for (stem, pred) in &preds {
        match (gts.get(stem), fixes.get(stem)) {
            (Some(gt), Some(fix)) => matched.push((stem.clone(), pred, gt, fix)),
            _ => unmatched.push(stem.as_str()),
        }
    }
    if !unmatched.is_empty() {
        eprintln!("warning: no ground truth or fixations for: {}", unmatched.join(", "));
    }
    if matched.is_empty() {
        return Err(Failure::usage("no prediction matched a ground-truth map and fixation file"));
    }

    let rows = matched
        .par_iter()
        .map(|(stem, pred, gt, fix)| {
            let gt_map = load_map(gt)?;
            let fix = FixationSet::load(fix)?;
            if fix.dims() != gt_map.dims() {
                return Err(Error::Schema(format!(
                    "{stem}: fixation dims {:?} differ from ground truth {:?}",
                    fix.dims(),
                    gt_map.dims()
                )));
            }
            evaluate(stem, &load_map(pred)?, &gt_map, &fix, neg.as_ref())
        })
        .collect::<Result<Vec<_>, Error>>()?;
    for r in &rows {
        if r.sim.is_none() || r.cc.is_none() {
            eprintln!("warning: {}: SIM or CC undefined (flat or all-zero prediction); left blank", r.image);
        }
    }
    let report = EvalReport { rows };

    ensure_parent(&a.out)?;
    report.write_csv(&a.out)?;
    let summary = a.summary.clone().unwrap_or_else(|| a.out.with_extension("json"));
    report.write_summary(&summary)?;
    println!("{}", serde_json::to_string(&report.summary()?).map_err(Error::from)?);
    Ok(())
}
