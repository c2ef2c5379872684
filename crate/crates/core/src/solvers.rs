//! Classical ℓ1 baselines: complex ISTA / FISTA, ridge regression and a
//! KKT certificate for the LASSO problem
//!
//! `min_γ ½‖g − Rγ‖² + λ‖γ‖₁`.
//!
//! An ISTA step with step size β and threshold βλ is the proximal gradient
//! step of that objective. Any `β ≤ 1/L_s` keeps the objective monotone,
//! where `L_s` is the largest eigenvalue of `R^H R`.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::SteeringMatrix;
use crate::kernels;
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// ℓ1 weight λ.
    pub reg_lambda: f64,
    /// Step size β.
    pub step_beta: f64,
    pub max_iters: usize,
    /// Stop once the proximal-gradient step is shorter than `tol`: `‖γ_k − γ_{k−1}‖₂` for
    /// ISTA, `‖γ_k − y_{k−1}‖₂` from the extrapolated point for FISTA.
    pub tol: f64,
    /// Keep the objective value of every iterate in the trace.
    pub record_objective: bool,
}

impl SolverConfig {
    pub fn new(reg_lambda: f64, step_beta: f64) -> Self {
        Self {
            reg_lambda,
            step_beta,
            max_iters: 2000,
            tol: 1e-10,
            record_objective: false,
        }
    }

    /// λ = c·σ·√(2 ln L) with c = 1, β = 1/(2 L_s).
    pub fn for_noise(steering: &SteeringMatrix, noise_variance: f64) -> Result<Self> {
        Ok(Self::new(
            default_lambda(noise_variance.sqrt(), steering.cols()),
            lipschitz_step(steering)?,
        ))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.reg_lambda >= 0.0 && self.reg_lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "reg_lambda must be >= 0, got {}",
                self.reg_lambda
            )));
        }
        if !(self.step_beta > 0.0 && self.step_beta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "step_beta must be > 0, got {}",
                self.step_beta
            )));
        }
        Ok(())
    }
}

/// Default regularization weight `σ √(2 ln L)`.
pub fn default_lambda(sigma: f64, grid_len: usize) -> f64 {
    sigma * (2.0 * (grid_len as f64).ln()).sqrt()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveTrace {
    pub iterations: usize,
    pub converged: bool,
    /// `‖g − Rγ̂‖₂` of the returned iterate.
    pub residual_norm: f64,
    pub objective: Vec<f64>,
}

/// `e^{j∠x} max(|x| − θ, 0)` entry-wise.
pub fn complex_soft_threshold(x: &[Complex64], theta: f64) -> Result<Vec<Complex64>> {
    if !(theta >= 0.0) {
        return Err(Error::InvalidArgument(format!("threshold must be >= 0, got {theta}")));
    }
    Ok(x.iter().map(|&z| soft(z, theta)).collect())
}

#[inline]
pub(crate) fn soft(z: Complex64, theta: f64) -> Complex64 {
    let mag = z.norm();
    if mag > theta {
        z * ((mag - theta) / mag)
    } else {
        Complex64::new(0.0, 0.0)
    }
}

/// Largest eigenvalue `L_s` of `R^H R`, from the smaller Gram matrix `R R^H`.
pub fn lipschitz_constant(steering: &SteeringMatrix) -> Result<f64> {
    let r = steering.entries();
    if r.iter().all(|z| z.norm() == 0.0) {
        return Err(Error::InvalidArgument("steering matrix is zero".into()));
    }
    let gram = r.dot(&r.t().mapv(|z| z.conj()));
    linalg::largest_eigenvalue(gram.view())
}

/// Step size `1 / (2 L_s)`.
pub fn lipschitz_step(steering: &SteeringMatrix) -> Result<f64> {
    Ok(0.5 / lipschitz_constant(steering)?)
}

/// `½‖g − Rγ‖² + λ‖γ‖₁`.
pub fn lasso_objective(gamma: &[Complex64], g: &[Complex64], steering: &SteeringMatrix, lambda: f64) -> f64 {
    let rg = steering.apply(gamma);
    let fit: f64 = g.iter().zip(&rg).map(|(a, b)| (a - b).norm_sqr()).sum();
    0.5 * fit + lambda * linalg::l1_norm(gamma)
}

fn check_inputs(g: &[Complex64], steering: &SteeringMatrix, cfg: &SolverConfig) -> Result<()> {
    cfg.validate()?;
    if g.len() != steering.rows() {
        return Err(Error::Dimension {
            expected: steering.rows(),
            found: g.len(),
        });
    }
    Ok(())
}

/// One proximal-gradient step from `point`.
fn prox_step(point: &[Complex64], g: &[Complex64], steering: &SteeringMatrix, beta: f64, theta: f64) -> Vec<Complex64> {
    let rp = steering.apply(point);
    let resid: Vec<Complex64> = g.iter().zip(&rp).map(|(a, b)| a - b).collect();
    let grad = steering.adjoint_apply(&resid);
    point
        .iter()
        .zip(&grad)
        .map(|(p, d)| soft(p + d * beta, theta))
        .collect()
}

/// Complex ISTA from `γ₀ = 0`.
///
/// Fails with [`Error::Divergence`] if the objective increases by more
/// than 1e-9 (relative) between iterates.
pub fn ista_solve(g: &[Complex64], steering: &SteeringMatrix, cfg: &SolverConfig) -> Result<(Vec<Complex64>, SolveTrace)> {
    ista_from(linalg::zeros(steering.cols()), g, steering, cfg)
}

/// ISTA for exactly `iters` iterations from zero, without convergence test.
pub fn ista_iterations(g: &[Complex64], steering: &SteeringMatrix, reg_lambda: f64, step_beta: f64, iters: usize) -> Vec<Complex64> {
    let theta = step_beta * reg_lambda;
    let mut x = linalg::zeros(steering.cols());
    for _ in 0..iters {
        x = prox_step(&x, g, steering, step_beta, theta);
    }
    x
}

fn ista_from(
    mut x: Vec<Complex64>,
    g: &[Complex64],
    steering: &SteeringMatrix,
    cfg: &SolverConfig,
) -> Result<(Vec<Complex64>, SolveTrace)> {
    check_inputs(g, steering, cfg)?;
    let theta = cfg.step_beta * cfg.reg_lambda;
    let mut trace = SolveTrace::default();
    let mut obj = lasso_objective(&x, g, steering, cfg.reg_lambda);
    if cfg.record_objective {
        trace.objective.push(obj);
    }
    for it in 1..=cfg.max_iters {
        let next = prox_step(&x, g, steering, cfg.step_beta, theta);
        let step = linalg::distance(&next, &x);
        let next_obj = lasso_objective(&next, g, steering, cfg.reg_lambda);
        if !next_obj.is_finite() {
            return Err(Error::Numerical(format!("ISTA objective non-finite at iteration {it}")));
        }
        if next_obj > obj + 1e-9 * obj.abs().max(1.0) {
            return Err(Error::Divergence {
                iteration: it,
                before: obj,
                after: next_obj,
            });
        }
        x = next;
        obj = next_obj;
        trace.iterations = it;
        if cfg.record_objective {
            trace.objective.push(obj);
        }
        if step < cfg.tol {
            trace.converged = true;
            break;
        }
    }
    trace.residual_norm = residual_norm(&x, g, steering);
    Ok((x, trace))
}

/// FISTA with the standard `t_{k+1} = (1 + √(1 + 4t_k²))/2` momentum.
pub fn fista_solve(g: &[Complex64], steering: &SteeringMatrix, cfg: &SolverConfig) -> Result<(Vec<Complex64>, SolveTrace)> {
    check_inputs(g, steering, cfg)?;
    let theta = cfg.step_beta * cfg.reg_lambda;
    let mut x = linalg::zeros(steering.cols());
    let mut y = x.clone();
    let mut t = 1.0_f64;
    let mut trace = SolveTrace::default();
    if cfg.record_objective {
        trace.objective.push(lasso_objective(&x, g, steering, cfg.reg_lambda));
    }
    for it in 1..=cfg.max_iters {
        let next = prox_step(&y, g, steering, cfg.step_beta, theta);
        if next.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Numerical(format!("FISTA iterate non-finite at iteration {it}")));
        }
        // the prox-gradient step taken from y certifies stationarity; the
        // change between successive x does not, since momentum oscillates
        let step = linalg::distance(&next, &y);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let momentum = (t - 1.0) / t_next;
        y = next
            .iter()
            .zip(&x)
            .map(|(n, o)| n + (n - o) * momentum)
            .collect();
        x = next;
        t = t_next;
        trace.iterations = it;
        if cfg.record_objective {
            trace.objective.push(lasso_objective(&x, g, steering, cfg.reg_lambda));
        }
        if step < cfg.tol {
            trace.converged = true;
            break;
        }
    }
    trace.residual_norm = residual_norm(&x, g, steering);
    Ok((x, trace))
}

fn residual_norm(x: &[Complex64], g: &[Complex64], steering: &SteeringMatrix) -> f64 {
    let rx = steering.apply(x);
    g.iter().zip(&rx).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt()
}

/// Largest violation of the LASSO optimality conditions at `gamma`.
///
/// With `c = R^H(Rγ − g)`: nonzero entries need `c_l + λ γ_l/|γ_l| = 0`,
/// zero entries need `|c_l| ≤ λ`.
pub fn lasso_kkt_residual(gamma: &[Complex64], g: &[Complex64], steering: &SteeringMatrix, lambda: f64) -> f64 {
    let rg = steering.apply(gamma);
    let resid: Vec<Complex64> = rg.iter().zip(g).map(|(a, b)| a - b).collect();
    let corr = steering.adjoint_apply(&resid);
    gamma
        .iter()
        .zip(&corr)
        .map(|(x, c)| {
            let mag = x.norm();
            if mag > 0.0 {
                (c + x * (lambda / mag)).norm()
            } else {
                (c.norm() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Ridge estimate `(R^H R + μI)^{-1} R^H g`, computed as `R^H (R R^H + μI)^{-1} g`.
pub fn ridge_baseline(g: &[Complex64], steering: &SteeringMatrix, mu: f64) -> Result<Vec<Complex64>> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::InvalidArgument(format!("ridge weight must be > 0, got {mu}")));
    }
    if g.len() != steering.rows() {
        return Err(Error::Dimension {
            expected: steering.rows(),
            found: g.len(),
        });
    }
    let r = linalg::to_nalgebra(steering.entries().view());
    let mut gram = &r * r.adjoint();
    for i in 0..gram.nrows() {
        gram[(i, i)] += Complex64::new(mu, 0.0);
    }
    let y = linalg::solve_hpd(gram, g)?;
    Ok(steering.adjoint_apply(&y))
}

/// Batched fixed-iteration ISTA (`fista = false`) or FISTA on stacked rows.
///
/// `measurements` is `B × 2N`; returns the `B × 2L` estimates. Used for
/// throughput comparisons against batched network inference.
pub fn proximal_batch(
    measurements: &Array2<f64>,
    steering: &SteeringMatrix,
    reg_lambda: f64,
    step_beta: f64,
    iters: usize,
    fista: bool,
) -> Array2<f64> {
    let stacked = steering.stacked().into_array();
    let rt = stacked.t();
    let theta = step_beta * reg_lambda;
    let batch = measurements.nrows();
    let two_l = stacked.ncols();
    let mut x = Array2::<f64>::zeros((batch, two_l));
    let mut y = x.clone();
    let mut resid = measurements.clone();
    let mut t = 1.0_f64;
    for _ in 0..iters {
        let point = if fista { &y } else { &x };
        resid.assign(measurements);
        kernels::gemm(-1.0, &point.view(), &rt.view(), 1.0, &mut resid);
        let mut next = point.clone();
        kernels::gemm(step_beta, &resid.view(), &stacked.view(), 1.0, &mut next);
        for row in next.rows_mut() {
            kernels::soft_threshold_row(row, theta);
        }
        if fista {
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let momentum = (t - 1.0) / t_next;
            y = &next + &((&next - &x) * momentum);
            t = t_next;
        }
        x = next;
    }
    x
}
