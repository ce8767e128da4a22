//! Saliency evaluation: SIM, CC, AUC-Judd and shuffled AUC, plus per-image
//! reports.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid2D, Interpolation};
use crate::{imageio, npy};

/// Fixated pixel coordinates on a reference grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "FixationFile", into = "FixationFile")]
pub struct FixationSet {
    dims: (usize, usize),
    points: Vec<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
struct FixationFile {
    dims: [usize; 2],
    points: Vec<[usize; 2]>,
}

impl TryFrom<FixationFile> for FixationSet {
    type Error = Error;

    fn try_from(f: FixationFile) -> Result<Self> {
        Self::new((f.dims[0], f.dims[1]), f.points.into_iter().map(|[r, c]| (r, c)).collect())
    }
}

impl From<FixationSet> for FixationFile {
    fn from(s: FixationSet) -> Self {
        Self { dims: [s.dims.0, s.dims.1], points: s.points.into_iter().map(|(r, c)| [r, c]).collect() }
    }
}

impl FixationSet {
    pub fn new(dims: (usize, usize), points: Vec<(usize, usize)>) -> Result<Self> {
        if dims.0 == 0 || dims.1 == 0 {
            return Err(Error::invalid("fixation dims must be nonzero"));
        }
        if let Some(p) = points.iter().find(|(r, c)| *r >= dims.0 || *c >= dims.1) {
            return Err(Error::invalid(format!("fixation {p:?} outside {}x{}", dims.0, dims.1)));
        }
        Ok(Self { dims, points })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Schema(format!("fixation file: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn dims(&self) -> (usize, usize) {
        self.dims
    }

    pub fn points(&self) -> &[(usize, usize)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Maps every point onto a grid of `dims` by pixel-center scaling.
    pub fn rescaled(&self, dims: (usize, usize)) -> Result<Self> {
        if dims == self.dims {
            return Ok(self.clone());
        }
        let map = |v: usize, from: usize, to: usize| (((v as f64 + 0.5) * to as f64 / from as f64) as usize).min(to - 1);
        let points = self.points.iter().map(|&(r, c)| (map(r, self.dims.0, dims.0), map(c, self.dims.1, dims.1))).collect();
        Self::new(dims, points)
    }
}

fn check_dims(p: &Grid2D, g: &Grid2D) -> Result<()> {
    if p.dims() != g.dims() {
        return Err(Error::invalid(format!("map dims differ: {:?} vs {:?}", p.dims(), g.dims())));
    }
    Ok(())
}

fn unit_sum(g: &Grid2D) -> Result<Vec<f64>> {
    if g.as_slice().iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::invalid("distribution maps must be finite and nonnegative"));
    }
    let s = g.sum();
    if !(s > 0.0) {
        return Err(Error::UndefinedNormalization("map sums to zero"));
    }
    Ok(g.as_slice().iter().map(|v| v / s).collect())
}

/// Histogram intersection of the unit-sum maps, in `[0, 1]`.
///
/// Evaluated as `1 - 0.5 * sum |p - g|`, which equals `sum min(p, g)` for
/// unit-sum maps and returns exactly 1 for identical inputs.
pub fn sim(p: &Grid2D, g: &Grid2D) -> Result<f64> {
    check_dims(p, g)?;
    let (pn, gn) = (unit_sum(p)?, unit_sum(g)?);
    let mut l1 = 0.0;
    for (a, b) in pn.iter().zip(&gn) {
        l1 += (a - b).abs();
    }
    Ok((1.0 - 0.5 * l1).clamp(0.0, 1.0))
}

/// Pearson correlation over all pixels.
pub fn cc(p: &Grid2D, g: &Grid2D) -> Result<f64> {
    check_dims(p, g)?;
    // test flatness on the values: a rounded mean leaves ~1e-17 deviations
    let flat = |m: &Grid2D| {
        let (lo, hi) = m.min_max();
        lo == hi
    };
    if flat(p) || flat(g) {
        return Err(Error::UndefinedCorrelation("a map is constant"));
    }
    let (mp, mg) = (p.mean(), g.mean());
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in p.as_slice().iter().zip(g.as_slice()) {
        let (x, y) = (a - mp, b - mg);
        sxy += x * y;
        sxx += x * x;
        syy += y * y;
    }
    if !(sxx > 0.0) || !(syy > 0.0) {
        return Err(Error::UndefinedCorrelation("a map is constant"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Trapezoidal ROC area with `pos` as positives, thresholds at the distinct
/// positive values and `>=` comparison. Counts stay integral until the final
/// division.
fn roc_area(pos: &[f64], neg: &[f64]) -> f64 {
    let desc = |v: &[f64]| {
        let mut v = v.to_vec();
        v.sort_by(|a, b| b.total_cmp(a));
        v
    };
    let (pos, neg) = (desc(pos), desc(neg));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut twice_area: u128 = 0;
    let mut i = 0;
    while i < pos.len() {
        let theta = pos[i];
        let mut tp2 = tp;
        while tp2 < pos.len() && pos[tp2] >= theta {
            tp2 += 1;
        }
        let mut fp2 = fp;
        while fp2 < neg.len() && neg[fp2] >= theta {
            fp2 += 1;
        }
        twice_area += ((fp2 - fp) as u128) * ((tp + tp2) as u128);
        (tp, fp, i) = (tp2, fp2, tp2);
    }
    // closing segment to (1, 1)
    twice_area += ((neg.len() - fp) as u128) * ((tp + pos.len()) as u128);
    twice_area as f64 / (2.0 * pos.len() as f64 * neg.len() as f64)
}

fn values_at(p: &Grid2D, fix: &FixationSet) -> Vec<f64> {
    fix.points().iter().map(|&(r, c)| p.get(r, c)).collect()
}

/// AUC with fixations as positives and every non-fixated pixel as a negative.
pub fn auc_judd(p: &Grid2D, fix: &FixationSet) -> Result<f64> {
    if fix.is_empty() {
        return Err(Error::invalid("no fixations"));
    }
    if fix.dims() != p.dims() {
        return Err(Error::invalid(format!("fixation dims {:?} differ from map {:?}", fix.dims(), p.dims())));
    }
    let mut fixated = vec![false; p.len()];
    for &(r, c) in fix.points() {
        fixated[r * p.width() + c] = true;
    }
    let neg: Vec<f64> = p.as_slice().iter().zip(&fixated).filter(|(_, f)| !**f).map(|(v, _)| *v).collect();
    if neg.is_empty() {
        return Err(Error::invalid("every pixel is fixated; no negatives"));
    }
    Ok(roc_area(&values_at(p, fix), &neg))
}

/// Shuffled AUC: negatives are the map values at the supplied points
/// (typically fixations from other images).
pub fn sauc(p: &Grid2D, fix: &FixationSet, neg: &FixationSet) -> Result<f64> {
    if fix.is_empty() || neg.is_empty() {
        return Err(Error::invalid("sAUC needs nonempty fixation and negative sets"));
    }
    if fix.dims() != p.dims() || neg.dims() != p.dims() {
        return Err(Error::invalid("fixation dims differ from map"));
    }
    Ok(roc_area(&values_at(p, fix), &values_at(p, neg)))
}

/// Loads a map from an array file (`.npy`, one channel) or an image
/// (luminance scaled to `[0, 1]`).
pub fn load_map(path: impl AsRef<Path>) -> Result<Grid2D> {
    let path = path.as_ref();
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("npy")) {
        let t = npy::load_array(path)?;
        if t.channels() != 1 {
            return Err(Error::Schema(format!("{}: expected one channel, found {}", path.display(), t.channels())));
        }
        return Ok(t.channel(0));
    }
    crate::pipeline::to_luminance(&imageio::load_image(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub image: String,
    pub sim: Option<f64>,
    pub cc: Option<f64>,
    pub auc_judd: f64,
    pub sauc: Option<f64>,
}

/// `None` for a metric that is undefined on this input (e.g. CC of a flat map).
fn defined(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedNormalization(_) | Error::UndefinedCorrelation(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Scores one prediction. The prediction is bilinearly resized to the
/// ground-truth dims when they differ; negatives are rescaled likewise.
pub fn evaluate(
    image: &str,
    pred: &Grid2D,
    gt: &Grid2D,
    fix: &FixationSet,
    neg: Option<&FixationSet>,
) -> Result<EvalRow> {
    let (h, w) = gt.dims();
    let pred = pred.resize(h, w, Interpolation::Bilinear)?;
    let sauc = neg.map(|n| sauc(&pred, fix, &n.rescaled((h, w))?)).transpose()?;
    Ok(EvalRow {
        image: image.to_string(),
        sim: defined(sim(&pred, gt))?,
        cc: defined(cc(&pred, gt))?,
        auc_judd: auc_judd(&pred, fix)?,
        sauc,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricMeans {
    #[serde(rename = "SIM")]
    pub sim: Option<f64>,
    #[serde(rename = "CC")]
    pub cc: Option<f64>,
    #[serde(rename = "AUC_Judd")]
    pub auc_judd: f64,
    #[serde(rename = "sAUC")]
    pub sauc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub count: usize,
    pub means: MetricMeans,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("image,SIM,CC,AUC_Judd,sAUC\n");
        for r in &self.rows {
            let cell = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(s, "{},{},{},{},{}", r.image, cell(r.sim), cell(r.cc), r.auc_judd, cell(r.sauc));
        }
        s
    }

    /// Means over rows; an optional metric is averaged over the rows where it
    /// is defined and is `None` when no row has it.
    pub fn summary(&self) -> Result<EvalSummary> {
        if self.rows.is_empty() {
            return Err(Error::invalid("no rows to summarize"));
        }
        let mean = |f: &dyn Fn(&EvalRow) -> Option<f64>| {
            let vals: Vec<f64> = self.rows.iter().filter_map(f).collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        };
        let auc_judd = self.rows.iter().map(|r| r.auc_judd).sum::<f64>() / self.rows.len() as f64;
        Ok(EvalSummary {
            count: self.rows.len(),
            means: MetricMeans { sim: mean(&|r| r.sim), cc: mean(&|r| r.cc), auc_judd, sauc: mean(&|r| r.sauc) },
        })
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn write_summary(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string_pretty(&self.summary()?)? + "\n").map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(h: usize, w: usize, seed: u64) -> Grid2D {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Grid2D::from_fn(h, w, |_, _| rng.random_range(0.0..1.0))
    }

    /// Explicit sweep: rates as floats at every distinct positive value.
    fn sweep_oracle(pos: &[f64], neg: &[f64]) -> f64 {
        let mut th: Vec<f64> = pos.to_vec();
        th.sort_by(|a, b| b.partial_cmp(a).unwrap());
        th.dedup();
        let mut pts = vec![(0.0, 0.0)];
        for t in th {
            let tpr = pos.iter().filter(|&&v| v >= t).count() as f64 / pos.len() as f64;
            let fpr = neg.iter().filter(|&&v| v >= t).count() as f64 / neg.len() as f64;
            pts.push((fpr, tpr));
        }
        pts.push((1.0, 1.0));
        pts.windows(2).map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0).sum()
    }

    #[test]
    fn sim_examples() {
        let g = noise(8, 8, 1);
        assert_eq!(sim(&g, &g).unwrap(), 1.0);
        let a = Grid2D::from_fn(4, 4, |r, _| if r < 2 { 1.0 } else { 0.0 });
        let b = Grid2D::from_fn(4, 4, |r, _| if r >= 2 { 3.0 } else { 0.0 });
        assert_abs_diff_eq!(sim(&a, &b).unwrap(), 0.0, epsilon = 1e-15);
        let uniform = Grid2D::filled(5, 5, 2.0);
        let spike = Grid2D::from_fn(5, 5, |r, c| if (r, c) == (1, 3) { 1.0 } else { 0.0 });
        assert_abs_diff_eq!(sim(&uniform, &spike).unwrap(), 1.0 / 25.0, epsilon = 1e-15);
        assert!(matches!(sim(&g, &Grid2D::zeros(8, 8)), Err(Error::UndefinedNormalization(_))));
        assert!(sim(&g, &g.scale(-1.0)).is_err());
    }

    #[test]
    fn cc_examples() {
        let p = Grid2D::from_fn(4, 4, |r, c| ((r * 5 + c * 3) % 7) as f64);
        assert_eq!(cc(&p, &p.map(|v| 2.0 * v + 3.0)).unwrap(), 1.0);
        assert_eq!(cc(&p, &p.scale(-1.0)).unwrap(), -1.0);
        let x = noise(64, 64, 2);
        assert_abs_diff_eq!(cc(&x, &x.map(|v| 2.0 * v + 3.0)).unwrap(), 1.0, epsilon = 1e-12);
        assert!(cc(&x, &noise(64, 64, 3)).unwrap().abs() < 0.1);
        assert!(matches!(cc(&x, &Grid2D::filled(64, 64, 1.0)), Err(Error::UndefinedCorrelation(_))));
    }

    #[test]
    fn auc_judd_examples() {
        let fix = FixationSet::new((4, 4), vec![(0, 0), (1, 2), (3, 3)]).unwrap();
        let sep = Grid2D::from_fn(4, 4, |r, c| if [(0, 0), (1, 2), (3, 3)].contains(&(r, c)) { 0.9 + 0.01 * r as f64 } else { 0.1 });
        assert_eq!(auc_judd(&sep, &fix).unwrap(), 1.0);
        assert_eq!(auc_judd(&Grid2D::filled(4, 4, 0.3), &fix).unwrap(), 0.5);

        let hand = Grid2D::from_vec(
            4,
            4,
            vec![0.9, 0.1, 0.4, 0.4, 0.2, 0.5, 0.7, 0.3, 0.0, 0.6, 0.2, 0.8, 0.1, 0.3, 0.5, 0.4],
        )
        .unwrap();
        let pos = vec![0.9, 0.7, 0.4];
        let neg: Vec<f64> = hand
            .as_slice()
            .iter()
            .enumerate()
            .filter(|(i, _)| ![0, 6, 15].contains(i))
            .map(|(_, v)| *v)
            .collect();
        assert_abs_diff_eq!(auc_judd(&hand, &fix).unwrap(), sweep_oracle(&pos, &neg), epsilon = 1e-12);

        assert!(auc_judd(&hand, &FixationSet::new((4, 4), vec![]).unwrap()).is_err());
        assert!(auc_judd(&hand, &FixationSet::new((4, 5), vec![(0, 0)]).unwrap()).is_err());
        let all = FixationSet::new((1, 2), vec![(0, 0), (0, 1)]).unwrap();
        assert!(auc_judd(&Grid2D::zeros(1, 2), &all).is_err());
    }

    #[test]
    fn sauc_examples() {
        let p = noise(6, 6, 4);
        let fix = FixationSet::new((6, 6), vec![(0, 1), (2, 2), (5, 0), (2, 2)]).unwrap();
        assert_eq!(sauc(&p, &fix, &fix).unwrap(), 0.5);

        let grad = Grid2D::from_fn(6, 6, |r, _| r as f64);
        let hi = FixationSet::new((6, 6), vec![(4, 0), (5, 3)]).unwrap();
        let lo = FixationSet::new((6, 6), vec![(0, 0), (1, 5), (3, 2)]).unwrap();
        assert_eq!(sauc(&grad, &hi, &lo).unwrap(), 1.0);

        let neg = FixationSet::new((6, 6), vec![(1, 1), (3, 4), (0, 5), (5, 5), (2, 0)]).unwrap();
        assert_abs_diff_eq!(
            sauc(&p, &fix, &neg).unwrap(),
            sweep_oracle(&values_at(&p, &fix), &values_at(&p, &neg)),
            epsilon = 1e-12
        );
        assert!(sauc(&p, &fix, &FixationSet::new((6, 6), vec![]).unwrap()).is_err());
    }

    #[test]
    fn fixation_file_round_trip() {
        let f = FixationSet::from_json(r#"{"dims":[3,4],"points":[[0,1],[2,3]]}"#).unwrap();
        assert_eq!(f.points(), &[(0, 1), (2, 3)]);
        assert_eq!(FixationSet::from_json(&serde_json::to_string(&f).unwrap()).unwrap(), f);
        assert!(matches!(FixationSet::from_json(r#"{"dims":[3,4],"points":[[3,0]]}"#), Err(Error::Schema(_))));
        let up = f.rescaled((6, 8)).unwrap();
        assert_eq!(up.points(), &[(1, 3), (5, 7)]);
    }

    #[test]
    fn report_means_match_rows() {
        let gt = noise(8, 8, 5);
        let fix = FixationSet::new((8, 8), vec![(1, 1), (6, 2)]).unwrap();
        let neg = FixationSet::new((4, 4), vec![(0, 0), (3, 3)]).unwrap();
        let mut report = EvalReport::default();
        for s in 0..3 {
            report.rows.push(evaluate(&format!("img{s}"), &noise(16, 16, 10 + s), &gt, &fix, Some(&neg)).unwrap());
        }
        let sum = report.summary().unwrap();
        assert_eq!(sum.count, 3);
        assert_abs_diff_eq!(sum.means.sim.unwrap(), report.rows.iter().map(|r| r.sim.unwrap()).sum::<f64>() / 3.0, epsilon = 1e-15);
        assert!(sum.means.sauc.is_some());
        let csv = report.to_csv();
        assert!(csv.starts_with("image,SIM,CC,AUC_Judd,sAUC\nimg0,"));
        assert_eq!(csv.lines().count(), 4);
        let (s0, s2) = (report.rows[0].sauc.unwrap(), report.rows[2].sauc.unwrap());
        report.rows[1].sauc = None;
        assert_eq!(report.summary().unwrap().means.sauc, Some((s0 + s2) / 2.0));
        for r in &mut report.rows {
            r.sauc = None;
        }
        assert_eq!(report.summary().unwrap().means.sauc, None);
    }

    #[test]
    fn flat_prediction_leaves_cc_blank() {
        let gt = noise(8, 8, 5);
        let fix = FixationSet::new((8, 8), vec![(1, 1), (6, 2)]).unwrap();
        assert!(matches!(cc(&Grid2D::filled(8, 8, 0.4), &gt), Err(Error::UndefinedCorrelation(_))));
        let row = evaluate("flat", &Grid2D::filled(8, 8, 0.3), &gt, &fix, None).unwrap();
        assert_eq!((row.cc, row.auc_judd), (None, 0.5));
        assert!(row.sim.is_some());
        let zero = evaluate("zero", &Grid2D::zeros(8, 8), &gt, &fix, None).unwrap();
        assert_eq!((zero.sim, zero.cc), (None, None));
        let report = EvalReport { rows: vec![row] };
        assert!(report.to_csv().contains(",,0.5,"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn ranges_and_invariances(seed in any::<u64>(), k in 0.1f64..10.0) {
            let (p, g) = (noise(7, 9, seed), noise(7, 9, seed ^ 0x55));
            let s = sim(&p, &g).unwrap();
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert!((s - sim(&g, &p).unwrap()).abs() <= 1e-15);
            prop_assert!((sim(&p.scale(k), &g.scale(k)).unwrap() - s).abs() <= 1e-12);
            let c = cc(&p, &g).unwrap();
            prop_assert!((-1.0..=1.0).contains(&c));
            prop_assert!((cc(&p.scale(k), &g.scale(k)).unwrap() - c).abs() <= 1e-12);

            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts = (0..5).map(|_| (rng.random_range(0..7), rng.random_range(0..9))).collect();
            let fix = FixationSet::new((7, 9), pts).unwrap();
            let a = auc_judd(&p, &fix).unwrap();
            prop_assert!((0.0..=1.0).contains(&a));
            // strictly monotone transforms keep the ordering
            prop_assert_eq!(auc_judd(&p.map(|v| (3.0 * v).exp() + 1.0), &fix).unwrap(), a);
            let neg = FixationSet::new((7, 9), vec![(0, 0), (6, 8), (3, 4)]).unwrap();
            let sa = sauc(&p, &fix, &neg).unwrap();
            prop_assert!((0.0..=1.0).contains(&sa));
            prop_assert_eq!(sauc(&p.map(|v| v.powi(3)), &fix, &neg).unwrap(), sa);
        }
    }
}
