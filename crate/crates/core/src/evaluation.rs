//! Monte Carlo suites: effective detection rates, estimator statistics,
//! false detections, baseline perturbation and runtime.
//!
//! Every trial is generated from its own RNG stream, so suites are
//! reproducible from `(seed, trial count)` regardless of thread count.
//! Elevation errors and bounds are reported in units of the Rayleigh
//! resolution.

use std::f64::consts::PI;
use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::estimation::{crlb_elevation, invert_with, EstimationConfig, EstimationResult, ProfileSource};
use crate::formats::Table;
use crate::geometry::{AcquisitionGeometry, SteeringMatrix};
use crate::kernels;
use crate::network::Network;
use crate::simulation::{make_sample, stream_rng, DatasetConfig, DatasetKind, LabeledSample, Scatterer, Scene};
use crate::solvers;
use crate::{Error, Result};

/// Trials processed per batch.
const CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationConfig {
    /// Monte Carlo trials per point.
    pub trials: usize,
    pub single_snrs: Vec<f64>,
    /// SNRs of the double-scatterer curves.
    pub double_snrs: Vec<f64>,
    pub alphas: Vec<f64>,
    pub amplitude_ratios: Vec<f64>,
    /// Separation used by the amplitude-ratio sweep.
    pub ratio_alpha: f64,
    /// Phase differences in degrees.
    pub phase_differences: Vec<f64>,
    pub phase_alpha: f64,
    /// SNR of the amplitude-ratio, phase and perturbation sweeps.
    pub sweep_snr: f64,
    /// Half-width of the uniform baseline perturbation (m).
    pub perturbation: f64,
    pub runtime_pixels: usize,
    /// Pure-noise SNR for the false-detection suite; `None` cycles through
    /// the training SNR levels 0..=10 dB.
    pub noise_snr: Option<f64>,
    pub estimation: EstimationConfig,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            trials: 20_000,
            single_snrs: vec![0.0, 3.0, 6.0, 10.0],
            double_snrs: vec![0.0, 6.0],
            alphas: (1..=12).map(|k| k as f64 / 10.0).collect(),
            amplitude_ratios: vec![1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0],
            ratio_alpha: 1.0,
            phase_differences: (0..=12).map(|k| 15.0 * k as f64).collect(),
            phase_alpha: 0.6,
            sweep_snr: 6.0,
            perturbation: 10.0,
            runtime_pixels: 10_000,
            noise_snr: None,
            estimation: EstimationConfig::default(),
        }
    }
}

impl EvaluationConfig {
    pub fn validate(&self, num_baselines: usize) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("evaluation needs at least one trial".into()));
        }
        if self.alphas.iter().chain([&self.ratio_alpha, &self.phase_alpha]).any(|a| !(*a > 0.0)) {
            return Err(Error::Config("separations must be positive".into()));
        }
        if self.amplitude_ratios.iter().any(|r| !(*r >= 1.0)) {
            return Err(Error::Config("amplitude ratios must be >= 1".into()));
        }
        if !(self.perturbation >= 0.0) {
            return Err(Error::Config("perturbation must be >= 0".into()));
        }
        self.estimation.validate(num_baselines)
    }
}

/// Outcome of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRecord {
    pub trial: usize,
    pub truth: Scene,
    pub result: EstimationResult,
    pub effective: bool,
    /// Signed normalized errors `(ŝ − s)/ρ_s` per true scatterer in ascending
    /// elevation order, after matching; empty when the order is wrong.
    pub errors: Vec<f64>,
}

/// One point of a detection curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    /// The swept quantity (α, SNR, amplitude ratio or phase difference).
    pub parameter: f64,
    pub rate: f64,
    /// Binomial standard error of `rate`.
    pub std_error: f64,
    pub trials: usize,
    /// Trials with the correct model order.
    pub correct_order: usize,
    /// Mean normalized error per scatterer over correct-order trials.
    pub mean_error: Vec<f64>,
    /// Standard deviation of the normalized error per scatterer.
    pub std_dev: Vec<f64>,
    /// Rate below 10 %, where error statistics are not meaningful.
    pub low_rate: bool,
}

pub fn binomial_std_error(rate: f64, trials: usize) -> f64 {
    if trials == 0 {
        return 0.0;
    }
    (rate * (1.0 - rate) / trials as f64).sqrt()
}

/// Single scatterer: exactly one detection within `±3·CRLB`.
pub fn effective_single(result: &EstimationResult, truth: &Scatterer, crlb_std: f64) -> bool {
    result.order == 1 && (result.elevations[0] - truth.elevation).abs() <= 3.0 * crlb_std
}

/// Pair estimates with truths; returns signed errors in truth order.
fn match_two(estimates: &[f64], truth: &[Scatterer]) -> [f64; 2] {
    let direct = [estimates[0] - truth[0].elevation, estimates[1] - truth[1].elevation];
    let swapped = [estimates[1] - truth[0].elevation, estimates[0] - truth[1].elevation];
    let cost = |e: &[f64; 2]| e[0] * e[0] + e[1] * e[1];
    if cost(&swapped) < cost(&direct) {
        swapped
    } else {
        direct
    }
}

/// Double scatterer: two detections, each within `±3·CRLB` and `±0.5·d_s` of
/// its truth under the better one-to-one assignment.
pub fn effective_double(result: &EstimationResult, truth: &[Scatterer], crlb_std: &[f64], separation: f64) -> bool {
    if result.order != 2 || truth.len() != 2 || crlb_std.len() != 2 {
        return false;
    }
    let e = match_two(&result.elevations, truth);
    (0..2).all(|k| e[k].abs() <= 3.0 * crlb_std[k] && e[k].abs() <= 0.5 * separation)
}

/// Independent seed per (suite, point) so points never share noise.
fn point_seed(seed: u64, suite: u64, point: usize) -> u64 {
    let mut rng = stream_rng(seed, (suite << 32) ^ point as u64);
    rng.random()
}

fn score(sample: &LabeledSample, result: EstimationResult, trial: usize, geometry: &AcquisitionGeometry) -> Result<DetectionRecord> {
    let rayleigh = geometry.rayleigh_resolution();
    let truth = Scene {
        scatterers: sample.scene.sorted(),
    };
    let (effective, errors) = match truth.len() {
        0 => (result.order == 0, Vec::new()),
        1 => {
            let crlb = crlb_elevation(&truth, geometry, sample.snr_db, Default::default())?;
            let eff = effective_single(&result, &truth.scatterers[0], crlb.elevation_std[0]);
            let errs = if result.order == 1 {
                vec![(result.elevations[0] - truth.scatterers[0].elevation) / rayleigh]
            } else {
                Vec::new()
            };
            (eff, errs)
        }
        _ => {
            let t = &truth.scatterers;
            let sep = (t[1].elevation - t[0].elevation).abs();
            let errs = if result.order == 2 {
                match_two(&result.elevations, t).iter().map(|e| e / rayleigh).collect()
            } else {
                Vec::new()
            };
            let eff = match crlb_elevation(&truth, geometry, sample.snr_db, Default::default()) {
                Ok(crlb) => effective_double(&result, t, &crlb.elevation_std, sep),
                Err(Error::DegenerateScene(_)) => false,
                Err(e) => return Err(e),
            };
            (eff, errs)
        }
    };
    Ok(DetectionRecord {
        trial,
        truth,
        result,
        effective,
        errors,
    })
}

/// Run `trials` draws of `data` through `source`, scoring against the test
/// geometry of `test_steering`.
pub fn run_trials(
    source: &dyn ProfileSource,
    test_steering: &SteeringMatrix,
    data: &DatasetConfig,
    trials: usize,
    est: &EstimationConfig,
) -> Result<Vec<DetectionRecord>> {
    data.validate()?;
    let mut out = Vec::with_capacity(trials);
    for start in (0..trials).step_by(CHUNK) {
        let end = (start + CHUNK).min(trials);
        let samples: Vec<LabeledSample> = (start..end)
            .into_par_iter()
            .map(|i| make_sample(data, test_steering, i))
            .collect::<Result<_>>()?;
        let gs: Vec<Vec<Complex64>> = samples.iter().map(|s| s.g.clone()).collect();
        let vars: Vec<f64> = samples.iter().map(|s| s.noise_variance).collect();
        let results = invert_with(source, test_steering, &gs, &vars, est)?;
        let geometry = test_steering.geometry();
        let scored: Result<Vec<DetectionRecord>> = samples
            .par_iter()
            .zip(results)
            .enumerate()
            .map(|(k, (s, r))| score(s, r, start + k, geometry))
            .collect();
        out.extend(scored?);
    }
    Ok(out)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Summarize records as a curve point.
pub fn summarize(parameter: f64, records: &[DetectionRecord]) -> CurvePoint {
    let trials = records.len();
    let hits = records.iter().filter(|r| r.effective).count();
    let rate = if trials == 0 { 0.0 } else { hits as f64 / trials as f64 };
    let matched: Vec<&DetectionRecord> = records.iter().filter(|r| !r.errors.is_empty()).collect();
    let width = matched.first().map_or(0, |r| r.errors.len());
    let (mut mean_error, mut std_dev) = (Vec::new(), Vec::new());
    for k in 0..width {
        let col: Vec<f64> = matched.iter().map(|r| r.errors[k]).collect();
        let (m, s) = mean_std(&col);
        mean_error.push(m);
        std_dev.push(s);
    }
    CurvePoint {
        parameter,
        rate,
        std_error: binomial_std_error(rate, trials),
        trials,
        correct_order: matched.len(),
        mean_error,
        std_dev,
        low_rate: rate < 0.1,
    }
}

/// One row of the single-scatterer table.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleRow {
    pub snr_db: f64,
    pub rate: f64,
    pub std_error: f64,
    /// Mean normalized elevation error.
    pub mean: f64,
    /// Standard deviation of the normalized elevation error.
    pub std_dev: f64,
    /// Normalized single-scatterer CRLB.
    pub crlb: f64,
    pub trials: usize,
}

fn single_data(snr_db: f64, seed: u64) -> DatasetConfig {
    DatasetConfig {
        kind: DatasetKind::Single,
        fixed_snr_db: Some(snr_db),
        seed,
        ..Default::default()
    }
}

fn single_row(snr_db: f64, records: &[DetectionRecord], geometry: &AcquisitionGeometry) -> Result<SingleRow> {
    let p = summarize(snr_db, records);
    let probe = Scene::single(Scatterer::new(0.0, 1.0, 0.0));
    let crlb = crlb_elevation(&probe, geometry, snr_db, Default::default())?;
    Ok(SingleRow {
        snr_db,
        rate: p.rate,
        std_error: p.std_error,
        mean: p.mean_error.first().copied().unwrap_or(f64::NAN),
        std_dev: p.std_dev.first().copied().unwrap_or(f64::NAN),
        crlb: crlb.normalized[0],
        trials: p.trials,
    })
}

/// Effective detection rate and error statistics of single scatterers.
pub fn run_single_suite(
    source: &dyn ProfileSource,
    test_steering: &SteeringMatrix,
    snrs: &[f64],
    trials: usize,
    seed: u64,
    est: &EstimationConfig,
) -> Result<Vec<SingleRow>> {
    snrs.iter()
        .enumerate()
        .map(|(i, &snr)| {
            let records = run_trials(source, test_steering, &single_data(snr, point_seed(seed, 1, i)), trials, est)?;
            single_row(snr, &records, test_steering.geometry())
        })
        .collect()
}

/// Setting of one double-scatterer point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoublePoint {
    pub snr_db: f64,
    pub alpha: f64,
    /// Phase difference in radians.
    pub phase_difference: f64,
    pub amplitude_ratio: f64,
}

impl DoublePoint {
    /// Equal amplitudes and zero phase difference.
    pub fn worst_case(snr_db: f64, alpha: f64) -> Self {
        Self {
            snr_db,
            alpha,
            phase_difference: 0.0,
            amplitude_ratio: 1.0,
        }
    }

    fn data(&self, seed: u64) -> DatasetConfig {
        DatasetConfig {
            kind: DatasetKind::Double,
            fixed_snr_db: Some(self.snr_db),
            fixed_alpha: Some(self.alpha),
            fixed_phase_difference: Some(self.phase_difference),
            fixed_amplitude_ratio: Some(self.amplitude_ratio),
            seed,
            ..Default::default()
        }
    }
}

/// Curve over arbitrary double-scatterer settings; `suite` keeps the seeds
/// of different sweeps apart.
pub fn run_double_points(
    source: &dyn ProfileSource,
    test_steering: &SteeringMatrix,
    points: &[(f64, DoublePoint)],
    trials: usize,
    seed: u64,
    suite: u64,
    est: &EstimationConfig,
) -> Result<Vec<CurvePoint>> {
    points
        .iter()
        .enumerate()
        .map(|(i, (param, p))| {
            let records = run_trials(source, test_steering, &p.data(point_seed(seed, suite, i)), trials, est)?;
            Ok(summarize(*param, &records))
        })
        .collect()
}

/// Detection rate against normalized separation `α` at a fixed setting.
#[allow(clippy::too_many_arguments)]
pub fn run_double_curve(
    source: &dyn ProfileSource,
    test_steering: &SteeringMatrix,
    snr_db: f64,
    alphas: &[f64],
    phase_difference: f64,
    amplitude_ratio: f64,
    trials: usize,
    seed: u64,
    est: &EstimationConfig,
) -> Result<Vec<CurvePoint>> {
    let points: Vec<(f64, DoublePoint)> = alphas
        .iter()
        .map(|&alpha| {
            (
                alpha,
                DoublePoint {
                    snr_db,
                    alpha,
                    phase_difference,
                    amplitude_ratio,
                },
            )
        })
        .collect();
    // the SNR is folded into the suite tag so 0 dB and 6 dB curves differ
    run_double_points(source, test_steering, &points, trials, seed, 100 + snr_db.to_bits() % 997, est)
}

/// Detection rate against amplitude ratio (zero phase difference).
#[allow(clippy::too_many_arguments)]
pub fn run_amplitude_ratio(
    source: &dyn ProfileSource,
    test_steering: &SteeringMatrix,
    snr_db: f64,
    alpha: f64,
    ratios: &[f64],
    trials: usize,
    seed: u64,
    est: &EstimationConfig,
) -> Result<Vec<CurvePoint>> {
    let points: Vec<(f64, DoublePoint)> = ratios
        .iter()
        .map(|&r| {
            (
                r,
                DoublePoint {
                    amplitude_ratio: r,
                    ..DoublePoint::worst_case(snr_db, alpha)
                },
            )
        })
        .collect();
    run_double_points(source, test_steering, &points, trials, seed, 3, est)
}

/// Detection rate against phase difference (degrees), equal amplitudes.
#[allow(clippy::too_many_arguments)]
pub fn run_phase_sweep(
    source: &dyn ProfileSource,
    test_steering: &SteeringMatrix,
    snr_db: f64,
    alpha: f64,
    phases_deg: &[f64],
    trials: usize,
    seed: u64,
    est: &EstimationConfig,
) -> Result<Vec<CurvePoint>> {
    let points: Vec<(f64, DoublePoint)> = phases_deg
        .iter()
        .map(|&d| {
            (
                d,
                DoublePoint {
                    phase_difference: d * PI / 180.0,
                    ..DoublePoint::worst_case(snr_db, alpha)
                },
            )
        })
        .collect();
    run_double_points(source, test_steering, &points, trials, seed, 4, est)
}

/// Frequencies of each detected order on pure noise.
#[derive(Debug, Clone, PartialEq)]
pub struct FalseDetection {
    /// `counts[p]` trials detected `p` scatterers.
    pub counts: Vec<usize>,
    pub trials: usize,
}

impl FalseDetection {
    pub fn fraction(&self, order: usize) -> f64 {
        self.counts.get(order).map_or(0.0, |&c| c as f64 / self.trials as f64)
    }
}

/// Order selection on pure noise with known variance. With `snr_db = None`
/// the trials cycle through 0..=10 dB.
pub fn run_false_detection(
    source: &dyn ProfileSource,
    test_steering: &SteeringMatrix,
    snr_db: Option<f64>,
    trials: usize,
    seed: u64,
    est: &EstimationConfig,
) -> Result<FalseDetection> {
    let levels: Vec<f64> = match snr_db {
        Some(s) => vec![s],
        None => (0..=10).map(f64::from).collect(),
    };
    let mut counts = vec![0usize; est.max_order + 1];
    let per_level = trials / levels.len();
    let extra = trials % levels.len();
    for (i, &snr) in levels.iter().enumerate() {
        let n = per_level + usize::from(i < extra);
        if n == 0 {
            continue;
        }
        let data = DatasetConfig {
            kind: DatasetKind::NoiseOnly,
            fixed_snr_db: Some(snr),
            seed: point_seed(seed, 5, i),
            ..Default::default()
        };
        for r in run_trials(source, test_steering, &data, n, est)? {
            counts[r.result.order] += 1;
        }
    }
    Ok(FalseDetection { counts, trials })
}

/// Add i.i.d. `U(−m, m)` offsets to every baseline.
pub fn perturb_baselines(geometry: &AcquisitionGeometry, magnitude: f64, seed: u64) -> Result<AcquisitionGeometry> {
    if !(magnitude >= 0.0 && magnitude.is_finite()) {
        return Err(Error::InvalidArgument(format!("perturbation must be >= 0, got {magnitude}")));
    }
    if magnitude == 0.0 {
        return Ok(geometry.clone());
    }
    let mut rng = stream_rng(seed, 0);
    let b = geometry
        .baselines()
        .iter()
        .map(|&b| b + rng.random_range(-magnitude..=magnitude))
        .collect();
    geometry.with_baselines(b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationReport {
    pub nominal: SingleRow,
    pub perturbed: SingleRow,
    pub perturbed_geometry: AcquisitionGeometry,
    /// Std of the uniform offsets, `m/√3`.
    pub offset_std: f64,
    /// `offset_std` relative to the baseline spread.
    pub relative_to_spread: f64,
}

impl PerturbationReport {
    /// Drop in effective detection rate, in percentage points.
    pub fn rate_drop_points(&self) -> f64 {
        100.0 * (self.nominal.rate - self.perturbed.rate)
    }
}

/// Single-scatterer rate on nominal and on perturbed test baselines. The
/// source keeps its nominal dictionary; the test data and the least-squares
/// fit use the perturbed one.
pub fn run_perturbation(
    source: &dyn ProfileSource,
    magnitude: f64,
    snr_db: f64,
    trials: usize,
    seed: u64,
    est: &EstimationConfig,
) -> Result<PerturbationReport> {
    let nominal_r = source.steering().clone();
    let geometry = perturb_baselines(nominal_r.geometry(), magnitude, point_seed(seed, 6, 0))?;
    let perturbed_r = SteeringMatrix::build(&geometry, nominal_r.grid())?;
    let data = single_data(snr_db, point_seed(seed, 6, 1));
    let nominal = single_row(snr_db, &run_trials(source, &nominal_r, &data, trials, est)?, nominal_r.geometry())?;
    let perturbed = single_row(snr_db, &run_trials(source, &perturbed_r, &data, trials, est)?, &geometry)?;
    let offset_std = magnitude / 3f64.sqrt();
    Ok(PerturbationReport {
        nominal,
        perturbed,
        relative_to_spread: offset_std / nominal_r.geometry().baseline_std(),
        perturbed_geometry: geometry,
        offset_std,
    })
}

/// Wall time of one inference method on the benchmark batch.
#[derive(Debug, Clone, PartialEq)]
pub struct RuntimeRow {
    pub method: String,
    pub pixels: usize,
    pub seconds: f64,
    pub per_pixel_us: f64,
}

/// Time profile reconstruction (no order selection) for the network and
/// for fixed-iteration ISTA and FISTA on the same pixels. All three use the
/// same batched stacked-real kernels.
pub fn runtime_benchmark(
    net: &Network,
    pixels: usize,
    ista_iters: usize,
    fista_iters: usize,
    seed: u64,
) -> Result<Vec<RuntimeRow>> {
    let r = net.steering();
    let data = DatasetConfig {
        kind: DatasetKind::Mixed,
        fixed_snr_db: Some(6.0),
        seed,
        ..Default::default()
    };
    let samples: Vec<LabeledSample> = (0..pixels)
        .into_par_iter()
        .map(|i| make_sample(&data, r, i))
        .collect::<Result<_>>()?;
    let batch = kernels::stack_rows(samples.iter().map(|s| s.g.as_slice()), r.rows());
    let mean_var = samples.iter().map(|s| s.noise_variance).sum::<f64>() / pixels.max(1) as f64;
    let lambda = solvers::default_lambda(mean_var.sqrt(), r.cols());
    let step = solvers::lipschitz_step(r)?;
    let row = |method: String, secs: f64| RuntimeRow {
        method,
        pixels,
        seconds: secs,
        per_pixel_us: 1e6 * secs / pixels.max(1) as f64,
    };
    let mut rows = Vec::new();
    let t = Instant::now();
    let out = net.forward_batch(&batch)?;
    rows.push(row(format!("network-k{}", net.num_layers()), t.elapsed().as_secs_f64()));
    std::hint::black_box(out);
    for (name, iters, fista) in [("ista", ista_iters, false), ("fista", fista_iters, true)] {
        let t = Instant::now();
        let out = solvers::proximal_batch(&batch, r, lambda, step, iters, fista);
        rows.push(row(format!("{name}-{iters}"), t.elapsed().as_secs_f64()));
        std::hint::black_box(out);
    }
    Ok(rows)
}

/// Rates non-decreasing along the curve up to `k` combined standard errors.
pub fn is_non_decreasing(points: &[CurvePoint], k: f64) -> bool {
    points.windows(2).all(|w| {
        let slack = k * (w[0].std_error.powi(2) + w[1].std_error.powi(2)).sqrt();
        w[1].rate >= w[0].rate - slack
    })
}

fn f(v: f64) -> String {
    format!("{v:.6}")
}

fn fmt_vec(v: &[f64], width: usize) -> Vec<String> {
    (0..width).map(|k| v.get(k).map_or_else(|| "nan".into(), |x| f(*x))).collect()
}

pub fn single_table(rows: &[SingleRow]) -> Table {
    let mut t = Table::new(["snr_db", "rate", "rate_se", "crlb", "sigma", "mu", "trials"]);
    for r in rows {
        t.push(vec![
            r.snr_db.to_string(),
            f(r.rate),
            f(r.std_error),
            f(r.crlb),
            f(r.std_dev),
            f(r.mean),
            r.trials.to_string(),
        ]);
    }
    t
}

pub fn curve_table(parameter: &str, points: &[CurvePoint]) -> Table {
    let mut t = Table::new([
        parameter,
        "rate",
        "rate_se",
        "correct_order",
        "mean_err_lower",
        "mean_err_upper",
        "std_err_lower",
        "std_err_upper",
        "low_rate",
        "trials",
    ]);
    for p in points {
        let mut row = vec![p.parameter.to_string(), f(p.rate), f(p.std_error), p.correct_order.to_string()];
        row.extend(fmt_vec(&p.mean_error, 2));
        row.extend(fmt_vec(&p.std_dev, 2));
        row.push(p.low_rate.to_string());
        row.push(p.trials.to_string());
        t.push(row);
    }
    t
}

pub fn false_detection_table(fd: &FalseDetection) -> Table {
    let mut t = Table::new(["detected_order", "fraction", "count", "trials"]);
    for (p, &c) in fd.counts.iter().enumerate() {
        t.push(vec![p.to_string(), f(fd.fraction(p)), c.to_string(), fd.trials.to_string()]);
    }
    t
}

pub fn perturbation_table(rep: &PerturbationReport) -> Table {
    let mut t = Table::new([
        "case",
        "snr_db",
        "rate",
        "rate_se",
        "sigma",
        "mu",
        "offset_std_m",
        "offset_rel_spread",
    ]);
    for (name, r) in [("nominal", &rep.nominal), ("perturbed", &rep.perturbed)] {
        t.push(vec![
            name.into(),
            r.snr_db.to_string(),
            f(r.rate),
            f(r.std_error),
            f(r.std_dev),
            f(r.mean),
            f(rep.offset_std),
            f(rep.relative_to_spread),
        ]);
    }
    t
}

pub fn runtime_table(rows: &[RuntimeRow]) -> Table {
    let mut t = Table::new(["method", "pixels", "seconds", "per_pixel_us"]);
    for r in rows {
        t.push(vec![r.method.clone(), r.pixels.to_string(), f(r.seconds), f(r.per_pixel_us)]);
    }
    t
}
