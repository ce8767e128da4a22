//! Log-Gabor filter bank built directly on the DFT frequency lattice, plus
//! quadrature responses and local-energy maps.
//!
//! Radial frequency is measured relative to Nyquist: on an `H x W` lattice the
//! signed bin `(v, u)` sits at `(2u / W, 2v / H)`, so `rho = 1` is the highest
//! representable frequency and a wavelength `lambda` spans `2 * lambda` pixels.
//! Orientation `phi = atan2(fy, fx)` with `x` along columns and `y` along rows.
//! The angular lobe is one-sided, which makes the spatial kernels complex and
//! gives every response an even (real) and an odd (imaginary) part.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ComplexGrid2D, Fft2, Grid2D};
use crate::npy::{self, NpyDtype};

/// Smallest accepted `|ln(sigma_f / f0)|`.
pub const BANDWIDTH_GUARD: f64 = 1e-6;
/// Smallest bank dimension.
pub const MIN_BANK_DIM: usize = 8;

pub const DEFAULT_ORIENTATIONS: usize = 5;
pub const DEFAULT_WAVELENGTHS: usize = 4;
pub const DEFAULT_SIGMAS: usize = 4;
const BASE_WAVELENGTH: f64 = 1.0;
const BASE_SIGMA: f64 = 0.5;
const GROWTH: f64 = 1.5;

/// Parameters of one log-Gabor filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterParams {
    /// Center orientation in radians.
    pub theta0: f64,
    /// Center wavelength; `f0 = 1 / lambda0`.
    pub lambda0: f64,
    /// Frequency width parameter.
    pub sigma_f: f64,
    /// Orientation width in radians.
    pub sigma_theta: f64,
}

impl FilterParams {
    pub fn new(theta0: f64, lambda0: f64, sigma_f: f64, sigma_theta: f64) -> Result<Self> {
        let p = Self { theta0, lambda0, sigma_f, sigma_theta };
        p.validate()?;
        Ok(p)
    }

    pub fn f0(&self) -> f64 {
        1.0 / self.lambda0
    }

    /// `ln(sigma_f / f0)`, the log-radial bandwidth.
    pub fn log_bandwidth(&self) -> f64 {
        (self.sigma_f * self.lambda0).ln()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda0 > 0.0 && self.lambda0.is_finite()) {
            return Err(Error::invalid(format!("lambda0 must be > 0, got {}", self.lambda0)));
        }
        if !(self.sigma_theta > 0.0 && self.sigma_theta.is_finite()) {
            return Err(Error::invalid(format!("sigma_theta must be > 0, got {}", self.sigma_theta)));
        }
        if !(self.sigma_f > 0.0 && self.sigma_f.is_finite()) || !self.theta0.is_finite() {
            return Err(Error::invalid("sigma_f must be > 0 and theta0 finite"));
        }
        let lb = self.log_bandwidth();
        if lb.abs() < BANDWIDTH_GUARD {
            return Err(Error::DegenerateBandwidth(lb.abs()));
        }
        Ok(())
    }
}

/// Bank layout as the product of orientation, wavelength and width counts.
///
/// Orientations are `k * pi / n` over `[0, pi)`; wavelengths are `1.5^j`;
/// widths `(sigma_f, sigma_theta)` are both `0.5 * 1.5^i`. Entries are ordered
/// width-group major, then orientation, then wavelength.
pub fn bank_params(orientations: usize, wavelengths: usize, sigmas: usize) -> Vec<FilterParams> {
    let mut out = Vec::with_capacity(orientations * wavelengths * sigmas);
    for i in 0..sigmas {
        let sigma = BASE_SIGMA * GROWTH.powi(i as i32);
        for k in 0..orientations {
            let theta0 = k as f64 * PI / orientations as f64;
            for j in 0..wavelengths {
                let lambda0 = BASE_WAVELENGTH * GROWTH.powi(j as i32);
                out.push(FilterParams { theta0, lambda0, sigma_f: sigma, sigma_theta: sigma });
            }
        }
    }
    out
}

/// The 80-filter default layout: 5 orientations x 4 wavelengths x 4 widths.
pub fn default_bank_params() -> Vec<FilterParams> {
    bank_params(DEFAULT_ORIENTATIONS, DEFAULT_WAVELENGTHS, DEFAULT_SIGMAS)
}

/// Wraps an angle into `(-pi, pi]`.
fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI { PI } else { w }
}

/// Transfer function value at radial frequency `rho` and orientation `phi`.
///
/// Returns 0 at `rho == 0`.
pub fn transfer_value(p: &FilterParams, rho: f64, phi: f64) -> Result<f64> {
    let lb = p.log_bandwidth();
    if lb.abs() < BANDWIDTH_GUARD {
        return Err(Error::DegenerateBandwidth(lb.abs()));
    }
    if rho < 0.0 {
        return Err(Error::invalid(format!("rho must be >= 0, got {rho}")));
    }
    Ok(transfer_unchecked(p, lb, rho, phi))
}

#[inline]
fn transfer_unchecked(p: &FilterParams, log_bw: f64, rho: f64, phi: f64) -> f64 {
    if rho == 0.0 {
        return 0.0;
    }
    // ln(lambda0 / lambda) with lambda = 1 / rho
    let lr = (p.lambda0 * rho).ln();
    let radial = (-(lr * lr) / (2.0 * log_bw * log_bw)).exp();
    let dtheta = wrap_angle(phi - p.theta0);
    let angular = (-(dtheta * dtheta) / (2.0 * p.sigma_theta * p.sigma_theta)).exp();
    radial * angular
}

/// Signed DFT bin index; the Nyquist bin of an even axis is taken as positive.
#[inline]
pub fn signed_bin(k: usize, n: usize) -> isize {
    if k <= n / 2 { k as isize } else { k as isize - n as isize }
}

/// Lattice coordinates `(fx, fy)` of bin `(row, col)`, Nyquist-normalized.
#[inline]
pub fn lattice_frequency(row: usize, col: usize, h: usize, w: usize) -> (f64, f64) {
    (
        2.0 * signed_bin(col, w) as f64 / w as f64,
        2.0 * signed_bin(row, h) as f64 / h as f64,
    )
}

/// Polar coordinates `(rho, phi)` of bin `(row, col)`.
#[inline]
pub fn lattice_polar(row: usize, col: usize, h: usize, w: usize) -> (f64, f64) {
    let (fx, fy) = lattice_frequency(row, col, h, w);
    (fx.hypot(fy), fy.atan2(fx))
}

/// One filter: its parameters and its transfer grid in DFT bin order.
#[derive(Debug, Clone, PartialEq)]
pub struct Filter {
    pub params: FilterParams,
    pub transfer: Grid2D,
}

/// A set of log-Gabor filters sampled on one `H x W` frequency lattice.
#[derive(Clone)]
pub struct FilterBank {
    height: usize,
    width: usize,
    filters: Vec<Filter>,
    fft: Fft2,
}

impl std::fmt::Debug for FilterBank {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "FilterBank({} filters, {}x{})", self.filters.len(), self.height, self.width)
    }
}

/// Samples every filter on the `h x w` lattice.
pub fn build_bank(params: &[FilterParams], h: usize, w: usize) -> Result<FilterBank> {
    if h < MIN_BANK_DIM || w < MIN_BANK_DIM {
        return Err(Error::invalid(format!("bank dims must be >= {MIN_BANK_DIM}, got {h}x{w}")));
    }
    if params.is_empty() {
        return Err(Error::invalid("bank needs at least one filter"));
    }
    for p in params {
        p.validate()?;
    }
    let polar: Vec<(f64, f64)> = (0..h * w).map(|i| lattice_polar(i / w, i % w, h, w)).collect();
    let filters = params
        .par_iter()
        .map(|p| {
            let lb = p.log_bandwidth();
            let data = polar.iter().map(|&(rho, phi)| transfer_unchecked(p, lb, rho, phi)).collect();
            Filter { params: *p, transfer: Grid2D::from_vec_unchecked(h, w, data) }
        })
        .collect();
    Ok(FilterBank { height: h, width: w, filters, fft: Fft2::new(h, w) })
}

impl FilterBank {
    /// The default 80-filter bank at `h x w`.
    pub fn default_at(h: usize, w: usize) -> Result<Self> {
        build_bank(&default_bank_params(), h, w)
    }

    pub fn len(&self) -> usize {
        self.filters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn filters(&self) -> &[Filter] {
        &self.filters
    }

    pub fn filter(&self, index: usize) -> &Filter {
        &self.filters[index]
    }

    fn check_dims(&self, g: &Grid2D) -> Result<()> {
        if g.dims() != self.dims() {
            return Err(Error::invalid(format!(
                "image {:?} does not match bank {:?}; resize first",
                g.dims(),
                self.dims()
            )));
        }
        Ok(())
    }

    /// Spatial-domain kernel of filter `index`, shifted so the origin sits at
    /// `(H / 2, W / 2)`. Only used for inspection; filtering stays spectral.
    pub fn spatial_kernel(&self, index: usize) -> ComplexGrid2D {
        let (h, w) = self.dims();
        let spec = ComplexGrid2D::from_real(&self.filters[index].transfer);
        let k = self.fft.inverse(&spec);
        let data = (0..h * w)
            .map(|i| {
                let (r, c) = (i / w, i % w);
                k.get((r + h - h / 2) % h, (c + w - w / 2) % w)
            })
            .collect();
        ComplexGrid2D::from_vec(h, w, data).expect("dims preserved")
    }

    /// Writes one `<f8` array per transfer grid plus `index.json`.
    pub fn export(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut entries = Vec::with_capacity(self.len());
        for (i, f) in self.filters.iter().enumerate() {
            let file = format!("filter_{i:03}.npy");
            npy::save_grid(&f.transfer, dir.join(&file), NpyDtype::F64)?;
            entries.push(BankIndexEntry {
                index: i,
                theta0: f.params.theta0,
                lambda0: f.params.lambda0,
                sigma_f: f.params.sigma_f,
                sigma_theta: f.params.sigma_theta,
                file,
            });
        }
        let index = BankIndex { height: self.height, width: self.width, filters: entries };
        let path = dir.join("index.json");
        let json = serde_json::to_string_pretty(&index)?;
        fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))
    }
}

/// `index.json` written by [`FilterBank::export`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankIndex {
    pub height: usize,
    pub width: usize,
    pub filters: Vec<BankIndexEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankIndexEntry {
    pub index: usize,
    pub theta0: f64,
    pub lambda0: f64,
    pub sigma_f: f64,
    pub sigma_theta: f64,
    pub file: String,
}

/// Local energy of one filter response, tagged with where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyMap {
    pub grid: Grid2D,
    /// Bank index of the filter that produced the map.
    pub filter: usize,
    /// Identifier of the filtered source map (0 for the input image).
    pub source: usize,
}

/// An ordered, nonempty pool of equally sized energy maps.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseSet {
    maps: Vec<EnergyMap>,
}

impl ResponseSet {
    pub fn new(maps: Vec<EnergyMap>) -> Result<Self> {
        let first = maps.first().ok_or_else(|| Error::invalid("response set must be nonempty"))?;
        let dims = first.grid.dims();
        if let Some(m) = maps.iter().find(|m| m.grid.dims() != dims) {
            return Err(Error::invalid(format!(
                "response dims {:?} differ from {:?}",
                m.grid.dims(),
                dims
            )));
        }
        Ok(Self { maps })
    }

    /// Builds an untagged pool from plain grids (filter index = position).
    pub fn from_grids(grids: Vec<Grid2D>) -> Result<Self> {
        Self::new(
            grids
                .into_iter()
                .enumerate()
                .map(|(i, grid)| EnergyMap { grid, filter: i, source: 0 })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.maps[0].grid.dims()
    }

    pub fn maps(&self) -> &[EnergyMap] {
        &self.maps
    }

    pub fn get(&self, g: usize) -> &EnergyMap {
        &self.maps[g]
    }

    pub fn iter(&self) -> impl Iterator<Item = &EnergyMap> {
        self.maps.iter()
    }
}

/// `idft2(dft2(img) * transfer)`: real part is the even response, imaginary part the odd one.
pub fn apply_filter(img: &Grid2D, bank: &FilterBank, index: usize) -> Result<ComplexGrid2D> {
    bank.check_dims(img)?;
    if index >= bank.len() {
        return Err(Error::invalid(format!("filter index {index} out of range for {} filters", bank.len())));
    }
    let spec = bank.fft.forward(img);
    Ok(filter_spectrum(&spec, bank, index))
}

fn filter_spectrum(spec: &ComplexGrid2D, bank: &FilterBank, index: usize) -> ComplexGrid2D {
    let mut prod = spec.mul_real(&bank.filters[index].transfer).expect("bank dims checked");
    bank.fft.inverse_in_place(&mut prod);
    prod
}

/// Pointwise modulus `sqrt(even^2 + odd^2)`.
pub fn energy(resp: &ComplexGrid2D) -> Grid2D {
    let (h, w) = resp.dims();
    Grid2D::from_vec_unchecked(h, w, resp.as_slice().iter().map(|c| c.norm()).collect())
}

/// Energy maps of every bank filter applied to `img`, in bank order.
pub fn respond_all(img: &Grid2D, bank: &FilterBank) -> Result<ResponseSet> {
    respond_all_tagged(img, bank, 0)
}

pub(crate) fn respond_all_tagged(img: &Grid2D, bank: &FilterBank, source: usize) -> Result<ResponseSet> {
    bank.check_dims(img)?;
    let spec = bank.fft.forward(img);
    let maps = (0..bank.len())
        .into_par_iter()
        .map(|g| EnergyMap { grid: energy(&filter_spectrum(&spec, bank, g)), filter: g, source })
        .collect();
    ResponseSet::new(maps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_grid(h: usize, w: usize, seed: u64) -> Grid2D {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Grid2D::from_fn(h, w, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn default_params_layout() {
        let p = default_bank_params();
        assert_eq!(p.len(), 80);
        let mut lambdas: Vec<f64> = p.iter().map(|f| f.lambda0).collect();
        lambdas.sort_by(f64::total_cmp);
        lambdas.dedup();
        assert_eq!(lambdas, vec![1.0, 1.5, 2.25, 3.375]);
        let mut sigmas: Vec<(f64, f64)> = p.iter().map(|f| (f.sigma_f, f.sigma_theta)).collect();
        sigmas.dedup();
        assert_eq!(sigmas, vec![(0.5, 0.5), (0.75, 0.75), (1.125, 1.125), (1.6875, 1.6875)]);
        let mut thetas: Vec<f64> = p.iter().map(|f| f.theta0).collect();
        thetas.sort_by(f64::total_cmp);
        thetas.dedup();
        assert_eq!(thetas.len(), 5);
        for (k, t) in thetas.iter().enumerate() {
            assert_abs_diff_eq!(*t, k as f64 * PI / 5.0, epsilon = 1e-15);
        }
        assert!(p.iter().all(|f| f.validate().is_ok()));
    }

    #[test]
    fn transfer_peak_dc_and_angular_falloff() {
        let p = FilterParams::new(0.3, 1.0, 0.5, 0.5).unwrap();
        assert_eq!(transfer_value(&p, p.f0(), p.theta0).unwrap(), 1.0);
        assert_eq!(transfer_value(&p, 0.0, 0.3).unwrap(), 0.0);
        let v = transfer_value(&p, p.f0(), p.theta0 + p.sigma_theta).unwrap();
        assert_abs_diff_eq!(v, (-0.5f64).exp(), epsilon = 1e-15);
        assert!(transfer_value(&p, -1.0, 0.0).is_err());
    }

    #[test]
    fn degenerate_bandwidth_is_rejected() {
        // sigma_f == f0
        assert!(matches!(FilterParams::new(0.0, 2.0, 0.5, 0.5), Err(Error::DegenerateBandwidth(_))));
        let p = FilterParams { theta0: 0.0, lambda0: 2.0, sigma_f: 0.5 + 1e-9, sigma_theta: 0.5 };
        assert!(matches!(transfer_value(&p, 0.5, 0.0), Err(Error::DegenerateBandwidth(_))));
        assert!(build_bank(&[p], 16, 16).is_err());
    }

    #[test]
    fn wrap_angle_range() {
        assert_abs_diff_eq!(wrap_angle(3.0 * PI), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_angle(-PI), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_angle(0.25), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(wrap_angle(2.0 * PI - 0.25), -0.25, epsilon = 1e-12);
    }

    #[test]
    fn bank_grids_bounded_with_zero_dc() {
        let bank = FilterBank::default_at(64, 64).unwrap();
        assert_eq!(bank.len(), 80);
        for f in bank.filters() {
            assert_eq!(f.transfer.get(0, 0), 0.0);
            let (lo, hi) = f.transfer.min_max();
            assert!(lo >= 0.0 && hi <= 1.0 && hi > 0.0);
        }
        let again = FilterBank::default_at(64, 64).unwrap();
        assert_eq!(bank.filters(), again.filters());
    }

    #[test]
    fn bank_rejects_small_dims() {
        assert!(matches!(FilterBank::default_at(7, 64), Err(Error::InvalidArgument(_))));
        assert!(FilterBank::default_at(64, 4).is_err());
    }

    #[test]
    fn zero_and_constant_images_give_zero_response() {
        let bank = FilterBank::default_at(16, 16).unwrap();
        for img in [Grid2D::zeros(16, 16), Grid2D::filled(16, 16, 3.5)] {
            let set = respond_all(&img, &bank).unwrap();
            assert_eq!(set.len(), 80);
            for m in set.maps() {
                assert!(m.grid.as_slice().iter().all(|&v| v.abs() < 1e-12));
            }
        }
    }

    #[test]
    fn apply_filter_rejects_mismatched_dims() {
        let bank = FilterBank::default_at(16, 16).unwrap();
        assert!(apply_filter(&Grid2D::zeros(16, 17), &bank, 0).is_err());
        assert!(apply_filter(&Grid2D::zeros(16, 16), &bank, 80).is_err());
    }

    #[test]
    fn energy_is_modulus() {
        let c = ComplexGrid2D::from_vec(1, 2, vec![Complex64::new(3.0, 4.0), Complex64::new(0.0, 0.0)]).unwrap();
        assert_eq!(energy(&c).as_slice(), &[5.0, 0.0]);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data: Vec<_> = (0..30).map(|_| Complex64::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0))).collect();
        let c = ComplexGrid2D::from_vec(5, 6, data.clone()).unwrap();
        let e = energy(&c);
        for (v, z) in e.as_slice().iter().zip(&data) {
            let oracle = (z.re * z.re + z.im * z.im).sqrt();
            assert_abs_diff_eq!(*v, oracle, epsilon = 1e-15);
        }
    }

    #[test]
    fn respond_all_matches_single_filter_path() {
        let bank = FilterBank::default_at(24, 32).unwrap();
        let img = random_grid(24, 32, 4);
        let set = respond_all(&img, &bank).unwrap();
        for g in [0, 17, 42, 79] {
            let direct = energy(&apply_filter(&img, &bank, g).unwrap());
            assert_eq!(set.get(g).grid, direct);
            assert_eq!(set.get(g).filter, g);
        }
    }

    #[test]
    fn apply_filter_is_linear() {
        let bank = FilterBank::default_at(16, 16).unwrap();
        let (x, y) = (random_grid(16, 16, 10), random_grid(16, 16, 11));
        let (a, b) = (1.7, -0.4);
        let combo = Grid2D::from_fn(16, 16, |r, c| a * x.get(r, c) + b * y.get(r, c));
        for g in [3, 50] {
            let rx = apply_filter(&x, &bank, g).unwrap();
            let ry = apply_filter(&y, &bank, g).unwrap();
            let rc = apply_filter(&combo, &bank, g).unwrap();
            for i in 0..256 {
                let want = rx.as_slice()[i] * a + ry.as_slice()[i] * b;
                assert!((rc.as_slice()[i] - want).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn spectral_filtering_equals_circular_convolution() {
        let (h, w) = (16, 16);
        let bank = FilterBank::default_at(h, w).unwrap();
        let img = random_grid(h, w, 12);
        for g in [5, 33, 71] {
            // unshifted kernel: k(y, x) = idft2(transfer)
            let k = idft_direct(&bank.filter(g).transfer);
            let resp = apply_filter(&img, &bank, g).unwrap();
            let scale = resp.as_slice().iter().map(|c| c.norm()).fold(0.0, f64::max);
            for y in 0..h {
                for x in 0..w {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for yy in 0..h {
                        for xx in 0..w {
                            acc += img.get(yy, xx) * k[((y + h - yy) % h) * w + (x + w - xx) % w];
                        }
                    }
                    assert!((acc - resp.get(y, x)).norm() <= 1e-6 * scale);
                }
            }
        }
    }

    fn idft_direct(t: &Grid2D) -> Vec<Complex64> {
        let (h, w) = t.dims();
        let mut out = vec![Complex64::new(0.0, 0.0); h * w];
        for y in 0..h {
            for x in 0..w {
                let mut acc = Complex64::new(0.0, 0.0);
                for v in 0..h {
                    for u in 0..w {
                        let ang = 2.0 * PI * ((u * x) as f64 / w as f64 + (v * y) as f64 / h as f64);
                        acc += t.get(v, u) * Complex64::from_polar(1.0, ang);
                    }
                }
                out[y * w + x] = acc / (h * w) as f64;
            }
        }
        out
    }

    #[test]
    fn spatial_kernels_are_complex_and_centered() {
        let bank = FilterBank::default_at(32, 32).unwrap();
        let k = bank.spatial_kernel(2);
        let odd: f64 = k.as_slice().iter().map(|c| c.im.abs()).sum();
        assert!(odd > 1e-6, "one-sided lobes give an odd part");
        let peak = k.as_slice().iter().enumerate().max_by(|a, b| a.1.norm().total_cmp(&b.1.norm())).unwrap().0;
        assert_eq!(peak, 16 * 32 + 16);
    }

    #[test]
    fn export_writes_index_and_filters() {
        let dir = tempfile::tempdir().unwrap();
        let bank = build_bank(&bank_params(1, 2, 1), 8, 8).unwrap();
        bank.export(dir.path()).unwrap();
        let index: BankIndex =
            serde_json::from_str(&fs::read_to_string(dir.path().join("index.json")).unwrap()).unwrap();
        assert_eq!(index.filters.len(), 2);
        let t = npy::load_array(dir.path().join(&index.filters[1].file)).unwrap();
        assert_eq!(t.channel(0), bank.filter(1).transfer);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn responses_are_linear_and_energy_nonnegative(
                seed in any::<u64>(),
                a in -3.0f64..3.0,
                b in -3.0f64..3.0,
                g in 0usize..80,
            ) {
                let bank = FilterBank::default_at(12, 20).unwrap();
                let (x, y) = (random_grid(12, 20, seed), random_grid(12, 20, seed ^ 1));
                let combo = Grid2D::from_fn(12, 20, |r, c| a * x.get(r, c) + b * y.get(r, c));
                let (rx, ry) = (apply_filter(&x, &bank, g).unwrap(), apply_filter(&y, &bank, g).unwrap());
                let rc = apply_filter(&combo, &bank, g).unwrap();
                for i in 0..rc.as_slice().len() {
                    prop_assert!((rc.as_slice()[i] - (rx.as_slice()[i] * a + ry.as_slice()[i] * b)).norm() < 1e-9);
                }
                prop_assert!(energy(&rc).as_slice().iter().all(|&v| v >= 0.0));
            }

            #[test]
            fn transfer_grids_in_unit_range(h in 8usize..40, w in 8usize..40) {
                let bank = FilterBank::default_at(h, w).unwrap();
                for f in bank.filters() {
                    prop_assert_eq!(f.transfer.get(0, 0), 0.0);
                    prop_assert!(f.transfer.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
                }
            }
        }
    }
}
