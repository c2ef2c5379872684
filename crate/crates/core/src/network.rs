//! The unrolled complex-valued network.
//!
//! Layer `i` maps the previous estimate `γ_{i−1}` to
//!
//! ```text
//! γ_i = η_ss( γ_{i−1} + W_i (g − R γ_{i−1}), θ_i )
//! ```
//!
//! i.e. an ISTA step whose gradient matrix `W_i` (L×N, complex) and
//! shrinkage parameters `θ_i` are learned, with the second weight coupled to
//! the first as `I − W_i R`. `η_ss` passes the `⌈ρL⌉` largest-magnitude
//! entries through unchanged and shrinks the rest, either with the complex
//! soft threshold or with a three-segment piecewise-linear magnitude map.
//!
//! Inference runs either natively in complex arithmetic (one pixel) or as
//! real GEMMs on the stacked `[Re | Im]` embedding (a batch of pixels).

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{stack_parts, SteeringMatrix};
use crate::kernels;
use crate::linalg;
use crate::solvers;

/// Shrinkage used outside the selected support.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Soft,
    Piecewise,
}

impl Activation {
    /// Number of threshold parameters per layer.
    pub fn num_thresholds(self) -> usize {
        match self {
            Activation::Soft => 1,
            Activation::Piecewise => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Soft => "soft",
            Activation::Piecewise => "piecewise",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "soft" => Ok(Activation::Soft),
            "piecewise" | "pwl" => Ok(Activation::Piecewise),
            other => Err(Error::Config(format!("unknown activation '{other}'"))),
        }
    }
}

/// Per-layer support-selection fraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SupportSchedule {
    Constant(f64),
    /// `min(p·i, p_max)` for 1-based layer index `i`.
    Linear { p: f64, p_max: f64 },
}

impl SupportSchedule {
    pub fn fraction(&self, layer: usize) -> f64 {
        match *self {
            SupportSchedule::Constant(rho) => rho,
            SupportSchedule::Linear { p, p_max } => ss_schedule(layer, p, p_max),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            SupportSchedule::Constant(rho) => (0.0..1.0).contains(&rho),
            SupportSchedule::Linear { p, p_max } => p >= 0.0 && (0.0..1.0).contains(&p_max),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid support schedule {self:?}")))
        }
    }
}

impl std::fmt::Display for SupportSchedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SupportSchedule::Constant(rho) => write!(f, "constant:{rho}"),
            SupportSchedule::Linear { p, p_max } => write!(f, "linear:{p}:{p_max}"),
        }
    }
}

impl std::str::FromStr for SupportSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad support schedule '{s}'")))
        };
        let sched = match parts.as_slice() {
            [v] => SupportSchedule::Constant(num(v)?),
            ["constant", v] => SupportSchedule::Constant(num(v)?),
            ["linear", p, pm] => SupportSchedule::Linear {
                p: num(p)?,
                p_max: num(pm)?,
            },
            _ => return Err(Error::Config(format!("bad support schedule '{s}'"))),
        };
        sched.validate()?;
        Ok(sched)
    }
}

/// Support fraction of 1-based layer `i`: `p·i` capped at `p_max`.
pub fn ss_schedule(layer: usize, p: f64, p_max: f64) -> f64 {
    (p * layer as f64).min(p_max).max(0.0)
}

/// Number of entries passed through for fraction `rho` of `len` entries.
pub fn selected_count(rho: f64, len: usize) -> usize {
    if rho <= 0.0 {
        0
    } else {
        ((rho * len as f64 - 1e-9).ceil() as usize).min(len)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkConfig {
    pub layers: usize,
    pub activation: Activation,
    pub support: SupportSchedule,
    /// Divide each measurement by its RMS before the layers and multiply the
    /// output back, so the learned thresholds see unit-power inputs.
    pub input_scaling: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            layers: 12,
            activation: Activation::Piecewise,
            support: SupportSchedule::Constant(0.05),
            input_scaling: true,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        self.support.validate()
    }
}

/// Learnable parameters of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    /// `Re(W)`, L×N.
    pub w_re: Array2<f64>,
    /// `Im(W)`, L×N.
    pub w_im: Array2<f64>,
    /// `θ` (soft) or `θ₁…θ₅` (piecewise).
    pub thresholds: Vec<f64>,
}

impl LayerParams {
    pub fn num_params(&self) -> usize {
        self.w_re.len() + self.w_im.len() + self.thresholds.len()
    }

    /// Stacked `2L × 2N` weight.
    pub fn stacked_weight(&self) -> Array2<f64> {
        stack_parts(&self.w_re, &self.w_im)
    }

    /// Keep `θ₁, θ₂ ≥ 0` and `θ₁ ≤ θ₂`.
    pub fn project_thresholds(&mut self) {
        if let Some(t0) = self.thresholds.first_mut() {
            *t0 = t0.max(0.0);
        }
        if self.thresholds.len() == 5 {
            self.thresholds[1] = self.thresholds[1].max(self.thresholds[0]);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.w_re.iter().chain(self.w_im.iter()).chain(self.thresholds.iter()).all(|v| v.is_finite())
    }
}

/// Three-segment piecewise-linear magnitude map.
#[inline]
pub fn piecewise_magnitude(r: f64, t: &[f64]) -> f64 {
    let (t1, t2, t3, t4, t5) = (t[0], t[1], t[2], t[3], t[4]);
    if r <= t1 {
        t3 * r
    } else if r <= t2 {
        t4 * (r - t1) + t3 * t1
    } else {
        t5 * (r - t2) + t4 * (t2 - t1) + t3 * t1
    }
}

/// Output magnitude of the shrinkage for input magnitude `r`.
#[inline]
pub fn shrink_magnitude(r: f64, thresholds: &[f64], activation: Activation) -> f64 {
    match activation {
        Activation::Soft => (r - thresholds[0]).max(0.0),
        Activation::Piecewise => piecewise_magnitude(r, thresholds),
    }
}

#[inline]
fn shrink(z: Complex64, thresholds: &[f64], activation: Activation) -> Complex64 {
    match activation {
        Activation::Soft => solvers::soft(z, thresholds[0]),
        Activation::Piecewise => {
            let r = z.norm();
            if r <= thresholds[0] {
                z * thresholds[2]
            } else {
                z * (piecewise_magnitude(r, thresholds) / r)
            }
        }
    }
}

/// Phase-preserving piecewise-linear shrinkage with `θ = (θ₁, …, θ₅)`.
pub fn piecewise_linear(x: &[Complex64], theta: &[f64; 5]) -> Result<Vec<Complex64>> {
    if theta[0] > theta[1] {
        return Err(Error::InvalidArgument(format!(
            "piecewise knots out of order: θ₁ = {} > θ₂ = {}",
            theta[0], theta[1]
        )));
    }
    Ok(x.iter().map(|&z| shrink(z, theta, Activation::Piecewise)).collect())
}

/// Indices of the `count` largest magnitudes; ties go to the lower index.
pub fn top_indices(magnitudes: &[f64], count: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..magnitudes.len()).collect();
    if count == 0 {
        return Vec::new();
    }
    let cmp = |a: &usize, b: &usize| magnitudes[*b].total_cmp(&magnitudes[*a]).then(a.cmp(b));
    if count < idx.len() {
        idx.select_nth_unstable_by(count - 1, cmp);
        idx.truncate(count);
    }
    idx.sort_unstable();
    idx
}

/// Support selection: the `⌈ρL⌉` largest entries bypass the shrinkage.
pub fn support_select(x: &[Complex64], thresholds: &[f64], rho: f64, activation: Activation) -> Result<Vec<Complex64>> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::InvalidArgument(format!("support fraction must be in [0, 1), got {rho}")));
    }
    if thresholds.len() != activation.num_thresholds() {
        return Err(Error::Dimension {
            expected: activation.num_thresholds(),
            found: thresholds.len(),
        });
    }
    Ok(apply_shrinkage(x, thresholds, rho, activation))
}

fn apply_shrinkage(x: &[Complex64], thresholds: &[f64], rho: f64, activation: Activation) -> Vec<Complex64> {
    let mags: Vec<f64> = x.iter().map(|z| z.norm()).collect();
    let keep = top_indices(&mags, selected_count(rho, x.len()));
    let mut out: Vec<Complex64> = x.iter().map(|&z| shrink(z, thresholds, activation)).collect();
    for i in keep {
        out[i] = x[i];
    }
    out
}

/// Apply the layer activation to one stacked row in place, recording the
/// selected entries in `selected` (cleared first).
pub(crate) fn activate_row(
    mut row: ndarray::ArrayViewMut1<f64>,
    thresholds: &[f64],
    rho: f64,
    activation: Activation,
    mags: &mut Vec<f64>,
    selected: &mut Vec<usize>,
) {
    kernels::row_magnitudes(row.view(), mags);
    let half = mags.len();
    selected.clear();
    selected.extend(top_indices(mags, selected_count(rho, half)));
    let mut next_sel = selected.iter().peekable();
    for l in 0..half {
        if next_sel.peek() == Some(&&l) {
            next_sel.next();
            continue;
        }
        let r = mags[l];
        let scale = match activation {
            Activation::Soft => {
                if r > thresholds[0] {
                    (r - thresholds[0]) / r
                } else {
                    0.0
                }
            }
            Activation::Piecewise => {
                if r <= thresholds[0] {
                    thresholds[2]
                } else {
                    piecewise_magnitude(r, thresholds) / r
                }
            }
        };
        row[l] *= scale;
        row[l + half] *= scale;
    }
}

/// RMS of a measurement vector.
pub fn input_scale(g: &[Complex64]) -> f64 {
    if g.is_empty() {
        return 0.0;
    }
    (linalg::norm_sqr(g) / g.len() as f64).sqrt()
}

/// Divide every stacked row by its RMS in place; returns the scales. Zero rows
/// keep scale 0 and are left untouched.
pub(crate) fn scale_rows(m: &mut Array2<f64>) -> Vec<f64> {
    let half = m.ncols() / 2;
    m.rows_mut()
        .into_iter()
        .map(|mut row| {
            let c = if half == 0 { 0.0 } else { (row.dot(&row) / half as f64).sqrt() };
            if c > 0.0 {
                row /= c;
            }
            c
        })
        .collect()
}

/// Intermediate values of one layer for a batch, kept for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct LayerCache {
    /// `g − R γ_{i−1}`, B × 2N.
    pub resid: Array2<f64>,
    /// Pre-activation `γ_{i−1} + W_i resid`, B × 2L.
    pub pre: Array2<f64>,
    /// Selected indices per batch row.
    pub selected: Vec<Vec<usize>>,
}

/// The K-layer unrolled network bound to its (frozen) steering matrix.
#[derive(Debug, Clone)]
pub struct Network {
    config: NetworkConfig,
    pub layers: Vec<LayerParams>,
    steering: SteeringMatrix,
    stacked_r: Array2<f64>,
    step_beta: f64,
    init_lambda: f64,
}

/// Initial shrinkage parameters: `θ = βλ` (soft) or a piecewise map close
/// to soft thresholding with a small slope below the first knot.
pub fn initial_thresholds(activation: Activation, step_beta: f64, init_lambda: f64) -> Vec<f64> {
    let t1 = step_beta * init_lambda;
    match activation {
        Activation::Soft => vec![t1],
        Activation::Piecewise => vec![t1, 2.0 * t1, 0.01, 0.5, 1.0],
    }
}

/// `λ_init = 0.1 · mean_b max_l |R^H g_b|` over a calibration batch.
pub fn calibrate_init_lambda<'a, I>(steering: &SteeringMatrix, measurements: I) -> Result<f64>
where
    I: IntoIterator<Item = &'a [Complex64]>,
{
    let (mut total, mut count) = (0.0, 0usize);
    for g in measurements {
        let corr = steering.adjoint_apply(g);
        total += corr.iter().map(|z| z.norm()).fold(0.0, f64::max);
        count += 1;
    }
    if count == 0 {
        return Err(Error::InvalidArgument("empty calibration batch".into()));
    }
    Ok(0.1 * total / count as f64)
}

fn initial_layer(steering: &SteeringMatrix, activation: Activation, step_beta: f64, init_lambda: f64) -> LayerParams {
    let r = steering.entries();
    LayerParams {
        w_re: r.t().mapv(|z| step_beta * z.re).as_standard_layout().into_owned(),
        w_im: r.t().mapv(|z| -step_beta * z.im).as_standard_layout().into_owned(),
        thresholds: initial_thresholds(activation, step_beta, init_lambda),
    }
}

/// Build a network whose every layer starts as one ISTA step, `W = βR^H`.
pub fn init_network(steering: &SteeringMatrix, config: NetworkConfig, init_lambda: f64) -> Result<Network> {
    config.validate()?;
    if !(init_lambda >= 0.0 && init_lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("init lambda must be >= 0, got {init_lambda}")));
    }
    let step_beta = solvers::lipschitz_step(steering)?;
    let layer = initial_layer(steering, config.activation, step_beta, init_lambda);
    Network::from_parts(steering.clone(), config, vec![layer; config.layers], step_beta, init_lambda)
}

impl Network {
    /// Assemble a network from explicit parameters (e.g. a checkpoint).
    pub fn from_parts(
        steering: SteeringMatrix,
        config: NetworkConfig,
        layers: Vec<LayerParams>,
        step_beta: f64,
        init_lambda: f64,
    ) -> Result<Self> {
        config.validate()?;
        if layers.len() != config.layers {
            return Err(Error::Dimension {
                expected: config.layers,
                found: layers.len(),
            });
        }
        let (n, l) = (steering.rows(), steering.cols());
        for layer in &layers {
            if layer.w_re.dim() != (l, n) || layer.w_im.dim() != (l, n) {
                return Err(Error::InvalidArgument(format!(
                    "layer weight has shape {:?}, expected ({l}, {n})",
                    layer.w_re.dim()
                )));
            }
            if layer.thresholds.len() != config.activation.num_thresholds() {
                return Err(Error::Dimension {
                    expected: config.activation.num_thresholds(),
                    found: layer.thresholds.len(),
                });
            }
        }
        let layers = layers
            .into_iter()
            .map(|p| LayerParams {
                w_re: p.w_re.as_standard_layout().into_owned(),
                w_im: p.w_im.as_standard_layout().into_owned(),
                thresholds: p.thresholds,
            })
            .collect();
        let stacked_r = steering.stacked().into_array();
        Ok(Self {
            config,
            layers,
            steering,
            stacked_r,
            step_beta,
            init_lambda,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn steering(&self) -> &SteeringMatrix {
        &self.steering
    }

    pub fn step_beta(&self) -> f64 {
        self.step_beta
    }

    pub fn init_lambda(&self) -> f64 {
        self.init_lambda
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Total trainable parameters, `2NLK + |θ|K`.
    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(LayerParams::num_params).sum()
    }

    pub(crate) fn stacked_steering(&self) -> &Array2<f64> {
        &self.stacked_r
    }

    /// Append freshly initialized layers up to `layers` in total.
    pub fn extend_to(&mut self, layers: usize) {
        let fresh = initial_layer(&self.steering, self.config.activation, self.step_beta, self.init_lambda);
        while self.layers.len() < layers {
            self.layers.push(fresh.clone());
        }
        self.config.layers = self.layers.len();
    }

    fn check_measurement(&self, g: &[Complex64]) -> Result<()> {
        if g.len() != self.steering.rows() {
            return Err(Error::Dimension {
                expected: self.steering.rows(),
                found: g.len(),
            });
        }
        Ok(())
    }

    /// Native complex forward pass for one pixel.
    pub fn forward(&self, g: &[Complex64]) -> Result<Vec<Complex64>> {
        Ok(self.forward_trace(g)?.pop().unwrap_or_else(|| linalg::zeros(self.steering.cols())))
    }

    /// Native complex forward pass returning every layer's output.
    pub fn forward_trace(&self, g: &[Complex64]) -> Result<Vec<Vec<Complex64>>> {
        self.check_measurement(g)?;
        if !self.config.input_scaling {
            return self.trace_core(g);
        }
        let c = input_scale(g);
        if c == 0.0 {
            return Ok(vec![linalg::zeros(self.steering.cols()); self.layers.len()]);
        }
        let scaled: Vec<Complex64> = g.iter().map(|z| z / c).collect();
        let mut outputs = self.trace_core(&scaled)?;
        for z in outputs.iter_mut().flatten() {
            *z *= c;
        }
        Ok(outputs)
    }

    fn trace_core(&self, g: &[Complex64]) -> Result<Vec<Vec<Complex64>>> {
        let (n, l) = (self.steering.rows(), self.steering.cols());
        let mut gamma = linalg::zeros(l);
        let mut outputs = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let rg = self.steering.apply(&gamma);
            let resid: Vec<Complex64> = g.iter().zip(&rg).map(|(a, b)| a - b).collect();
            let mut pre = gamma.clone();
            for (row, p) in pre.iter_mut().enumerate() {
                let mut acc = Complex64::new(0.0, 0.0);
                for (col, r) in resid.iter().enumerate().take(n) {
                    acc += Complex64::new(layer.w_re[[row, col]], layer.w_im[[row, col]]) * r;
                }
                *p += acc;
            }
            let rho = self.config.support.fraction(i + 1);
            gamma = apply_shrinkage(&pre, &layer.thresholds, rho, self.config.activation);
            if gamma.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
                return Err(Error::NonFinite {
                    layer: i,
                    what: "layer output".into(),
                });
            }
            outputs.push(gamma.clone());
        }
        Ok(outputs)
    }

    /// Stacked-real forward pass for a `B × 2N` batch; returns `B × 2L`.
    pub fn forward_batch(&self, measurements: &Array2<f64>) -> Result<Array2<f64>> {
        if !self.config.input_scaling {
            return self.run_batch(measurements, None);
        }
        let mut scaled = measurements.clone();
        let scales = scale_rows(&mut scaled);
        let mut out = self.run_batch(&scaled, None)?;
        for (mut row, c) in out.rows_mut().into_iter().zip(scales) {
            row *= c;
        }
        Ok(out)
    }

    /// Forward pass on inputs that are already scaled; no rescaling applied.
    pub(crate) fn forward_batch_core(&self, measurements: &Array2<f64>) -> Result<Array2<f64>> {
        self.run_batch(measurements, None)
    }

    /// Forward pass over complex measurements, using the batched path.
    pub fn forward_many(&self, measurements: &[Vec<Complex64>]) -> Result<Vec<Vec<Complex64>>> {
        for g in measurements {
            self.check_measurement(g)?;
        }
        let batch = kernels::stack_rows(measurements.iter().map(|g| g.as_slice()), self.steering.rows());
        Ok(kernels::unstack_rows(&self.forward_batch(&batch)?))
    }

    pub(crate) fn forward_batch_cached(&self, measurements: &Array2<f64>) -> Result<(Array2<f64>, Vec<LayerCache>)> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let out = self.run_batch(measurements, Some(&mut caches))?;
        Ok((out, caches))
    }

    fn run_batch(&self, measurements: &Array2<f64>, mut caches: Option<&mut Vec<LayerCache>>) -> Result<Array2<f64>> {
        let two_n = 2 * self.steering.rows();
        if measurements.ncols() != two_n {
            return Err(Error::Dimension {
                expected: two_n,
                found: measurements.ncols(),
            });
        }
        let batch = measurements.nrows();
        let two_l = 2 * self.steering.cols();
        let rt = self.stacked_r.t();
        let mut x = Array2::<f64>::zeros((batch, two_l));
        let mut mags = Vec::new();
        let mut sel = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            let w = layer.stacked_weight();
            let mut resid = measurements.clone();
            kernels::gemm(-1.0, &x.view(), &rt, 1.0, &mut resid);
            let mut pre = x.clone();
            kernels::gemm(1.0, &resid.view(), &w.t(), 1.0, &mut pre);
            let rho = self.config.support.fraction(i + 1);
            let mut out = pre.clone();
            let mut selected = Vec::with_capacity(if caches.is_some() { batch } else { 0 });
            for row in out.rows_mut() {
                activate_row(row, &layer.thresholds, rho, self.config.activation, &mut mags, &mut sel);
                if caches.is_some() {
                    selected.push(sel.clone());
                }
            }
            if out.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    layer: i,
                    what: "layer output".into(),
                });
            }
            if let Some(c) = caches.as_deref_mut() {
                c.push(LayerCache {
                    resid,
                    pre,
                    selected,
                });
            }
            x = out;
        }
        Ok(x)
    }
}
