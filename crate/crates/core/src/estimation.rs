//! From a reconstructed profile to scatterer estimates, and the CRLB.
//!
//! The pipeline per pixel is: clean small entries, take local maxima as
//! candidate positions, fit amplitudes by least squares on the candidate
//! steering columns for every model order up to `P_max`, and keep the order
//! minimizing `‖g − R_S a‖² / σ² + c·P·ln N`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{AcquisitionGeometry, SteeringMatrix};
use crate::linalg;
use crate::network::Network;
use crate::solvers::{self, SolverConfig};
use crate::simulation::{noise_variance, Scene, SnrReference};

/// Columns are treated as dependent below this singular value ratio.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimationConfig {
    /// Entries below this fraction of the peak magnitude are zeroed.
    pub clean_fraction: f64,
    pub max_order: usize,
    /// Multiplier of `P ln N` in the order-selection criterion.
    pub penalty: f64,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self {
            clean_fraction: 0.05,
            max_order: 3,
            penalty: 1.5,
        }
    }
}

impl EstimationConfig {
    pub fn validate(&self, num_baselines: usize) -> Result<()> {
        if !(0.0..1.0).contains(&self.clean_fraction) {
            return Err(Error::InvalidArgument(format!(
                "clean fraction must be in [0, 1), got {}",
                self.clean_fraction
            )));
        }
        if self.max_order == 0 || self.max_order > num_baselines {
            return Err(Error::InvalidArgument(format!(
                "maximum model order must be in 1..={num_baselines}, got {}",
                self.max_order
            )));
        }
        if !(self.penalty >= 0.0) {
            return Err(Error::InvalidArgument("penalty must be >= 0".into()));
        }
        Ok(())
    }
}

/// Detected scatterers of one pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    pub order: usize,
    /// Ascending elevations (m).
    pub elevations: Vec<f64>,
    /// Grid indices matching `elevations`.
    pub indices: Vec<usize>,
    pub amplitudes: Vec<Complex64>,
    /// `‖g − R_S a‖²` of the chosen order.
    pub residual: f64,
    /// Criterion per order `0..=P_max`; `+∞` where too few candidates existed.
    pub criteria: Vec<f64>,
    /// Set when a dependent column had to be dropped.
    pub rank_deficient: bool,
}

impl EstimationResult {
    fn empty(residual: f64, criteria: Vec<f64>) -> Self {
        Self {
            order: 0,
            elevations: Vec::new(),
            indices: Vec::new(),
            amplitudes: Vec::new(),
            residual,
            criteria,
            rank_deficient: false,
        }
    }
}

/// Zero entries whose magnitude is below `fraction · max|x|`.
pub fn clean_small_entries(x: &[Complex64], fraction: f64) -> Result<Vec<Complex64>> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(format!("clean fraction must be in [0, 1), got {fraction}")));
    }
    let peak = x.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let cut = fraction * peak;
    Ok(x.iter()
        .map(|&z| if z.norm() < cut { Complex64::new(0.0, 0.0) } else { z })
        .collect())
}

/// Local maxima of `|x|`, largest first, at most `max_count`.
///
/// A plateau counts once, at its lowest index; zero entries never count.
pub fn candidate_peaks(x: &[Complex64], max_count: usize) -> Vec<usize> {
    let mag: Vec<f64> = x.iter().map(|z| z.norm()).collect();
    let mut peaks = Vec::new();
    let mut i = 0;
    while i < mag.len() {
        let mut j = i;
        while j + 1 < mag.len() && mag[j + 1] == mag[i] {
            j += 1;
        }
        let left_ok = i == 0 || mag[i - 1] < mag[i];
        let right_ok = j + 1 == mag.len() || mag[j + 1] < mag[i];
        if mag[i] > 0.0 && left_ok && right_ok {
            peaks.push(i);
        }
        i = j + 1;
    }
    peaks.sort_by(|&a, &b| mag[b].total_cmp(&mag[a]).then(a.cmp(&b)));
    peaks.truncate(max_count);
    peaks
}

/// Least-squares amplitudes on a support.
#[derive(Debug, Clone, PartialEq)]
pub struct LsFit {
    /// Support actually used (dependent columns removed).
    pub support: Vec<usize>,
    pub amplitudes: Vec<Complex64>,
    pub residual: f64,
    pub dropped: Vec<usize>,
}

/// `argmin_a ‖g − R_S a‖²`. When the selected columns are numerically
/// dependent, the last (weakest-ranked) column is dropped and the fit redone.
pub fn ls_reestimate(g: &[Complex64], steering: &SteeringMatrix, support: &[usize]) -> Result<LsFit> {
    let n = steering.rows();
    if g.len() != n {
        return Err(Error::Dimension { expected: n, found: g.len() });
    }
    if support.len() > n {
        return Err(Error::InvalidArgument(format!("support of size {} exceeds N = {n}", support.len())));
    }
    if let Some(&bad) = support.iter().find(|&&l| l >= steering.cols()) {
        return Err(Error::InvalidArgument(format!("support index {bad} out of range")));
    }
    let mut used = support.to_vec();
    let mut dropped = Vec::new();
    loop {
        if used.is_empty() {
            return Ok(LsFit {
                support: used,
                amplitudes: Vec::new(),
                residual: linalg::norm_sqr(g),
                dropped,
            });
        }
        let entries = steering.entries();
        let a = DMatrix::from_fn(n, used.len(), |i, k| entries[[i, used[k]]]);
        let (x, ratio) = linalg::least_squares(&a, g)?;
        if ratio < RANK_TOL {
            dropped.push(used.pop().expect("non-empty support"));
            continue;
        }
        let fit = &a * DVector::from_column_slice(&x);
        let residual = g.iter().zip(fit.iter()).map(|(y, f)| (y - f).norm_sqr()).sum();
        return Ok(LsFit {
            support: used,
            amplitudes: x,
            residual,
            dropped,
        });
    }
}

/// Order-selection criterion `residual / σ² + c·P·ln N`.
pub fn order_criterion(residual: f64, noise_variance: f64, order: usize, num_baselines: usize, penalty: f64) -> f64 {
    residual / noise_variance + penalty * order as f64 * (num_baselines as f64).ln()
}

/// Choose the model order among the nested supports `candidates[..P]`.
pub fn bic_select(
    g: &[Complex64],
    steering: &SteeringMatrix,
    candidates: &[usize],
    noise_variance: f64,
    cfg: &EstimationConfig,
) -> Result<EstimationResult> {
    let n = steering.rows();
    cfg.validate(n)?;
    if !(noise_variance > 0.0 && noise_variance.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise variance must be > 0, got {noise_variance}")));
    }
    let mut criteria = vec![f64::INFINITY; cfg.max_order + 1];
    let mut best: Option<(f64, LsFit)> = None;
    for order in 0..=cfg.max_order {
        if order > candidates.len() {
            break;
        }
        let fit = ls_reestimate(g, steering, &candidates[..order])?;
        if fit.support.len() < order {
            // order collapsed onto a smaller one already evaluated
            continue;
        }
        let value = order_criterion(fit.residual, noise_variance, order, n, cfg.penalty);
        criteria[order] = value;
        if best.as_ref().is_none_or(|(v, _)| value < *v) {
            best = Some((value, fit));
        }
    }
    let (_, fit) = best.expect("order 0 is always evaluated");
    if fit.support.is_empty() {
        return Ok(EstimationResult::empty(fit.residual, criteria));
    }
    let mut pairs: Vec<(usize, Complex64)> = fit.support.iter().copied().zip(fit.amplitudes.iter().copied()).collect();
    pairs.sort_by_key(|p| p.0);
    let grid = steering.grid();
    Ok(EstimationResult {
        order: pairs.len(),
        elevations: pairs.iter().map(|p| grid.position(p.0)).collect(),
        indices: pairs.iter().map(|p| p.0).collect(),
        amplitudes: pairs.iter().map(|p| p.1).collect(),
        residual: fit.residual,
        criteria,
        rank_deficient: !fit.dropped.is_empty(),
    })
}

/// Post-process any reconstructed profile (network or classical solver).
pub fn estimate_from_profile(
    g: &[Complex64],
    steering: &SteeringMatrix,
    profile: &[Complex64],
    noise_variance: f64,
    cfg: &EstimationConfig,
) -> Result<EstimationResult> {
    if profile.len() != steering.cols() {
        return Err(Error::Dimension {
            expected: steering.cols(),
            found: profile.len(),
        });
    }
    let cleaned = clean_small_entries(profile, cfg.clean_fraction)?;
    let peaks = candidate_peaks(&cleaned, cfg.max_order);
    bic_select(g, steering, &peaks, noise_variance, cfg)
}

/// Anything that maps measurements to elevation profiles on its grid.
pub trait ProfileSource: Sync {
    fn label(&self) -> String;
    /// Dictionary the profiles are expressed on.
    fn steering(&self) -> &SteeringMatrix;
    /// One profile per measurement, in order.
    fn profiles(&self, measurements: &[Vec<Complex64>], noise_variances: &[f64]) -> Result<Vec<Vec<Complex64>>>;
}

impl ProfileSource for Network {
    fn label(&self) -> String {
        format!("network-{}-k{}", self.config().activation.name(), self.num_layers())
    }

    fn steering(&self) -> &SteeringMatrix {
        Network::steering(self)
    }

    fn profiles(&self, measurements: &[Vec<Complex64>], _noise_variances: &[f64]) -> Result<Vec<Vec<Complex64>>> {
        self.forward_many(measurements)
    }
}

/// Classical reconstruction used in place of the network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClassicalMethod {
    Ista { iters: usize },
    Fista { iters: usize },
    /// Ridge with weight `μ = factor · L · σ²`, the MAP weight for a
    /// Gaussian prior of variance `1/L` per grid cell.
    Ridge { factor: f64 },
}

impl std::str::FromStr for ClassicalMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ista" => Ok(Self::Ista { iters: 2000 }),
            "fista" => Ok(Self::Fista { iters: 100 }),
            "ridge" => Ok(Self::Ridge { factor: 1.0 }),
            other => Err(Error::Config(format!("unknown solver '{other}' (ista, fista, ridge)"))),
        }
    }
}

/// Per-pixel classical solver with `λ = scale · σ √(2 ln L)`.
#[derive(Debug, Clone)]
pub struct ClassicalSource {
    pub steering: SteeringMatrix,
    pub method: ClassicalMethod,
    pub lambda_scale: f64,
    step: f64,
}

impl ClassicalSource {
    pub fn new(steering: SteeringMatrix, method: ClassicalMethod) -> Result<Self> {
        let step = solvers::lipschitz_step(&steering)?;
        Ok(Self {
            steering,
            method,
            lambda_scale: 1.0,
            step,
        })
    }

    fn profile(&self, g: &[Complex64], noise_variance: f64) -> Result<Vec<Complex64>> {
        let lambda = self.lambda_scale * solvers::default_lambda(noise_variance.sqrt(), self.steering.cols());
        let cfg = |iters| SolverConfig {
            max_iters: iters,
            ..SolverConfig::new(lambda, self.step)
        };
        match self.method {
            ClassicalMethod::Ista { iters } => Ok(solvers::ista_solve(g, &self.steering, &cfg(iters))?.0),
            ClassicalMethod::Fista { iters } => Ok(solvers::fista_solve(g, &self.steering, &cfg(iters))?.0),
            ClassicalMethod::Ridge { factor } => {
                solvers::ridge_baseline(g, &self.steering, factor * self.steering.cols() as f64 * noise_variance)
            },
        }
    }
}

impl ProfileSource for ClassicalSource {
    fn label(&self) -> String {
        match self.method {
            ClassicalMethod::Ista { iters } => format!("ista-{iters}"),
            ClassicalMethod::Fista { iters } => format!("fista-{iters}"),
            ClassicalMethod::Ridge { .. } => "ridge".into(),
        }
    }

    fn steering(&self) -> &SteeringMatrix {
        &self.steering
    }

    fn profiles(&self, measurements: &[Vec<Complex64>], noise_variances: &[f64]) -> Result<Vec<Vec<Complex64>>> {
        measurements
            .par_iter()
            .zip(noise_variances.par_iter())
            .map(|(g, &v)| self.profile(g, v))
            .collect()
    }
}

/// Full per-pixel inversion with the network.
pub fn invert_pixel(g: &[Complex64], net: &Network, noise_variance: f64, cfg: &EstimationConfig) -> Result<EstimationResult> {
    let profile = net.forward(g)?;
    estimate_from_profile(g, net.steering(), &profile, noise_variance, cfg)
}

/// Batched inversion: one network pass over all pixels, then parallel
/// post-processing. Results are in input order.
pub fn invert_batch(
    measurements: &[Vec<Complex64>],
    noise_variances: &[f64],
    net: &Network,
    cfg: &EstimationConfig,
) -> Result<Vec<EstimationResult>> {
    invert_with(net, net.steering(), measurements, noise_variances, cfg)
}

/// Inversion with any profile source. Least squares and order selection use
/// `fit_steering`, which may differ from the source's own dictionary (for
/// instance when the data come from perturbed baselines).
pub fn invert_with(
    source: &dyn ProfileSource,
    fit_steering: &SteeringMatrix,
    measurements: &[Vec<Complex64>],
    noise_variances: &[f64],
    cfg: &EstimationConfig,
) -> Result<Vec<EstimationResult>> {
    if measurements.len() != noise_variances.len() {
        return Err(Error::Dimension {
            expected: measurements.len(),
            found: noise_variances.len(),
        });
    }
    if fit_steering.cols() != source.steering().cols() {
        return Err(Error::Dimension {
            expected: source.steering().cols(),
            found: fit_steering.cols(),
        });
    }
    if let Some(i) = measurements
        .iter()
        .position(|g| g.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())))
    {
        return Err(Error::Numerical(format!("pixel {i} has a non-finite measurement")));
    }
    let mut out = Vec::with_capacity(measurements.len());
    for (gs, vars) in measurements.chunks(4096).zip(noise_variances.chunks(4096)) {
        let profiles = source.profiles(gs, vars)?;
        let chunk: Result<Vec<EstimationResult>> = gs
            .par_iter()
            .zip(profiles.par_iter())
            .zip(vars.par_iter())
            .map(|((g, p), &v)| estimate_from_profile(g, fit_steering, p, v, cfg))
            .collect();
        out.extend(chunk?);
    }
    Ok(out)
}

/// Elevation accuracy bound per scatterer.
#[derive(Debug, Clone, PartialEq)]
pub struct CrlbReport {
    /// Standard-deviation bound in meters, in scene order.
    pub elevation_std: Vec<f64>,
    /// The same divided by the Rayleigh resolution.
    pub normalized: Vec<f64>,
}

/// Fisher information of `g = Σ A_p e^{jφ_p} r(s_p) + ε` over
/// `(A_p, φ_p, s_p)` per scatterer, for circular Gaussian noise.
pub fn fisher_information(scene: &Scene, geometry: &AcquisitionGeometry, noise_variance: f64) -> DMatrix<f64> {
    let freqs = geometry.elevation_frequencies();
    let p = scene.len();
    let two_pi = 2.0 * std::f64::consts::PI;
    let jac = DMatrix::from_fn(freqs.len(), 3 * p, |n, col| {
        let s = &scene.scatterers[col / 3];
        let base = Complex64::from_polar(1.0, s.phase - two_pi * freqs[n] * s.elevation);
        match col % 3 {
            0 => base,
            1 => Complex64::new(0.0, s.amplitude) * base,
            _ => Complex64::new(0.0, -two_pi * freqs[n] * s.amplitude) * base,
        }
    });
    (jac.adjoint() * &jac).map(|z| z.re) * (2.0 / noise_variance)
}

/// Elevation CRLB of every scatterer in the scene at the given SNR.
pub fn crlb_elevation(scene: &Scene, geometry: &AcquisitionGeometry, snr_db: f64, reference: SnrReference) -> Result<CrlbReport> {
    if !(1..=2).contains(&scene.len()) {
        return Err(Error::InvalidArgument(format!(
            "CRLB needs a scene with 1 or 2 scatterers, got {}",
            scene.len()
        )));
    }
    if scene.scatterers.iter().any(|s| !(s.amplitude > 0.0)) {
        return Err(Error::DegenerateScene("scatterer with zero amplitude".into()));
    }
    let sigma2 = noise_variance(scene, snr_db, reference)?;
    let fim = fisher_information(scene, geometry, sigma2);
    let svd = fim.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-12 * smax) {
        return Err(Error::DegenerateScene(
            "Fisher information is singular (coinciding scatterers?)".into(),
        ));
    }
    let inv = fim
        .try_inverse()
        .ok_or_else(|| Error::DegenerateScene("Fisher information is not invertible".into()))?;
    let rayleigh = geometry.rayleigh_resolution();
    let elevation_std: Vec<f64> = (0..scene.len()).map(|p| inv[(3 * p + 2, 3 * p + 2)].sqrt()).collect();
    Ok(CrlbReport {
        normalized: elevation_std.iter().map(|v| v / rayleigh).collect(),
        elevation_std,
    })
}

/// Closed-form single-scatterer bound `λr / (4π σ_b √(2 N SNR))` in meters.
pub fn crlb_single_closed_form(geometry: &AcquisitionGeometry, snr_linear: f64) -> f64 {
    geometry.lambda_range()
        / (4.0 * std::f64::consts::PI * geometry.baseline_std() * (2.0 * geometry.num_baselines() as f64 * snr_linear).sqrt())
}
