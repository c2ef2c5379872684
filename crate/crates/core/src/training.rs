//! Reverse-mode gradients, Adam and the training loop.
//!
//! Gradients are derived by hand for the stacked-real forward pass
//!
//! ```text
//! Resid = G − X R̃ᵀ,   Pre = X + Resid W̃ᵀ,   X' = η(Pre)
//! ```
//!
//! giving `dW̃ = dPreᵀ Resid`, `dResid = dPre W̃` and `dX = dPre − dResid R̃`.
//! The selected support is held fixed during the backward pass.

use ndarray::{s, Array2, ArrayView1, ArrayViewMut1};
use rayon::prelude::*;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::SteeringMatrix;
use crate::kernels;
use crate::network::{
    calibrate_init_lambda, init_network, input_scale, piecewise_magnitude, scale_rows, Activation, LayerCache, LayerParams,
    Network, NetworkConfig,
};
use crate::simulation::{stream_rng, LabeledSample};

/// Samples per gradient shard; fixed so the reduction order never depends
/// on the number of worker threads.
const SHARD: usize = 256;

/// Mean over the batch of squared 2-norms of `estimate − truth` (stacked rows).
pub fn mse_loss(estimate: &Array2<f64>, truth: &Array2<f64>) -> Result<f64> {
    check_pair(estimate, truth)?;
    let total: f64 = estimate.iter().zip(truth.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(total / estimate.nrows() as f64)
}

/// Mean over the batch of `‖estimate − truth‖² / ‖truth‖²`.
pub fn nmse(estimate: &Array2<f64>, truth: &Array2<f64>) -> Result<f64> {
    check_pair(estimate, truth)?;
    let mut total = 0.0;
    for (row, (e, t)) in estimate.rows().into_iter().zip(truth.rows()).enumerate() {
        let power: f64 = t.iter().map(|v| v * v).sum();
        if power == 0.0 {
            return Err(Error::InvalidArgument(format!("sample {row} has an all-zero ground truth")));
        }
        let err: f64 = e.iter().zip(t.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
        total += err / power;
    }
    Ok(total / estimate.nrows() as f64)
}

fn check_pair(estimate: &Array2<f64>, truth: &Array2<f64>) -> Result<()> {
    if estimate.nrows() == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if estimate.dim() != truth.dim() {
        return Err(Error::InvalidArgument(format!(
            "estimate shape {:?} differs from truth shape {:?}",
            estimate.dim(),
            truth.dim()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub mse: f64,
    pub nmse: f64,
    pub batch_size: usize,
}

/// Measurements and dense targets of a minibatch, one sample per row.
#[derive(Debug, Clone)]
pub struct Batch {
    /// `B × 2N`.
    pub measurements: Array2<f64>,
    /// `B × 2L`.
    pub targets: Array2<f64>,
}

impl Batch {
    pub fn from_samples(samples: &[&LabeledSample], grid_len: usize) -> Self {
        let n = samples.first().map_or(0, |s| s.g.len());
        let measurements = kernels::stack_rows(samples.iter().map(|s| s.g.as_slice()), n);
        let mut targets = Array2::zeros((samples.len(), 2 * grid_len));
        for (b, s) in samples.iter().enumerate() {
            for &(l, z) in &s.support {
                targets[[b, l]] += z.re;
                targets[[b, l + grid_len]] += z.im;
            }
        }
        Self { measurements, targets }
    }

    /// Batch in the network's working scale: with input scaling enabled,
    /// each measurement and its target are divided by the measurement RMS.
    pub fn for_network(samples: &[&LabeledSample], net: &Network) -> Self {
        let mut batch = Self::from_samples(samples, net.steering().cols());
        if net.config().input_scaling {
            let scales = scale_rows(&mut batch.measurements);
            for (mut row, c) in batch.targets.rows_mut().into_iter().zip(scales) {
                if c > 0.0 {
                    row /= c;
                }
            }
        }
        batch
    }

    pub fn len(&self) -> usize {
        self.measurements.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn rows(&self, range: std::ops::Range<usize>) -> Batch {
        Batch {
            measurements: self.measurements.slice(s![range.clone(), ..]).to_owned(),
            targets: self.targets.slice(s![range, ..]).to_owned(),
        }
    }
}

/// Loss of the network on a batch.
pub fn evaluate_batch(net: &Network, batch: &Batch) -> Result<LossReport> {
    let out = net.forward_batch_core(&batch.measurements)?;
    Ok(LossReport {
        mse: mse_loss(&out, &batch.targets)?,
        nmse: nmse(&out, &batch.targets)?,
        batch_size: batch.len(),
    })
}

/// Gradient of the loss for every layer, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerParams>,
}

impl Gradients {
    pub fn zeros_like(layers: &[LayerParams]) -> Self {
        Self {
            layers: layers
                .iter()
                .map(|p| LayerParams {
                    w_re: Array2::zeros(p.w_re.dim()),
                    w_im: Array2::zeros(p.w_im.dim()),
                    thresholds: vec![0.0; p.thresholds.len()],
                })
                .collect(),
        }
    }

    fn accumulate(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.w_re += &b.w_re;
            a.w_im += &b.w_im;
            for (x, y) in a.thresholds.iter_mut().zip(&b.thresholds) {
                *x += y;
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|p| p.w_re.iter().chain(p.w_im.iter()).chain(p.thresholds.iter()))
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    fn check_finite(&self) -> Result<()> {
        for (i, p) in self.layers.iter().enumerate() {
            let blocks: [(&str, bool); 3] = [
                ("W_re gradient", p.w_re.iter().all(|v| v.is_finite())),
                ("W_im gradient", p.w_im.iter().all(|v| v.is_finite())),
                ("threshold gradient", p.thresholds.iter().all(|v| v.is_finite())),
            ];
            if let Some((what, _)) = blocks.iter().find(|(_, ok)| !ok) {
                return Err(Error::NonFinite {
                    layer: i,
                    what: what.to_string(),
                });
            }
        }
        Ok(())
    }
}

/// Backward pass of the shrinkage for one stacked row.
fn activation_backward(
    pre: ArrayView1<f64>,
    dout: ArrayView1<f64>,
    selected: &[usize],
    thresholds: &[f64],
    activation: Activation,
    mut dpre: ArrayViewMut1<f64>,
    dtheta: &mut [f64],
) {
    let half = pre.len() / 2;
    let mut next_sel = selected.iter().peekable();
    for l in 0..half {
        let (da, db) = (dout[l], dout[l + half]);
        if next_sel.peek() == Some(&&l) {
            next_sel.next();
            dpre[l] = da;
            dpre[l + half] = db;
            continue;
        }
        let (a, b) = (pre[l], pre[l + half]);
        let r = (a * a + b * b).sqrt();
        let zd = a * da + b * db;
        // f(r): output magnitude, fp: f'(r), df: ∂f/∂θ
        let (h, fp) = match activation {
            Activation::Soft => {
                let t = thresholds[0];
                if r <= t {
                    dpre[l] = 0.0;
                    dpre[l + half] = 0.0;
                    continue;
                }
                dtheta[0] -= zd / r;
                ((r - t) / r, 1.0)
            }
            Activation::Piecewise => {
                let t = thresholds;
                if r <= t[0] {
                    dtheta[2] += zd;
                    dpre[l] = t[2] * da;
                    dpre[l + half] = t[2] * db;
                    continue;
                }
                let g = zd / r;
                if r <= t[1] {
                    dtheta[0] += g * (t[2] - t[3]);
                    dtheta[2] += g * t[0];
                    dtheta[3] += g * (r - t[0]);
                    (piecewise_magnitude(r, t) / r, t[3])
                } else {
                    dtheta[0] += g * (t[2] - t[3]);
                    dtheta[1] += g * (t[3] - t[4]);
                    dtheta[2] += g * t[0];
                    dtheta[3] += g * (t[1] - t[0]);
                    dtheta[4] += g * (r - t[1]);
                    (piecewise_magnitude(r, t) / r, t[4])
                }
            }
        };
        // Jacobian h·I + (h'/r) z zᵀ with h' = (f' − h)/r
        let c = (fp - h) / (r * r) * zd;
        dpre[l] = h * da + c * a;
        dpre[l + half] = h * db + c * b;
    }
}

fn backward_shard(net: &Network, batch: &Batch, scale: f64) -> Result<(f64, Gradients)> {
    let (out, caches) = net.forward_batch_cached(&batch.measurements)?;
    let diff = &out - &batch.targets;
    let loss_sum: f64 = diff.iter().map(|v| v * v).sum();
    let mut dx = diff * (2.0 * scale);
    let mut grads = Gradients::zeros_like(&net.layers);
    let activation = net.config().activation;
    let r = net.stacked_steering();
    let (l, n) = (net.steering().cols(), net.steering().rows());
    for (i, (layer, cache)) in net.layers.iter().zip(&caches).enumerate().rev() {
        let LayerCache {
            resid,
            pre,
            selected,
        } = cache;
        let mut dpre = Array2::<f64>::zeros(pre.dim());
        let grad = &mut grads.layers[i];
        for (b, sel) in selected.iter().enumerate().take(pre.nrows()) {
            activation_backward(
                pre.row(b),
                dx.row(b),
                sel,
                &layer.thresholds,
                activation,
                dpre.row_mut(b),
                &mut grad.thresholds,
            );
        }
        let w = layer.stacked_weight();
        let mut dw = Array2::<f64>::zeros((2 * l, 2 * n));
        kernels::gemm(1.0, &dpre.t(), &resid.view(), 0.0, &mut dw);
        grad.w_re.assign(&dw.slice(s![..l, ..n]));
        grad.w_re += &dw.slice(s![l.., n..]);
        grad.w_im.assign(&dw.slice(s![l.., ..n]));
        grad.w_im -= &dw.slice(s![..l, n..]);
        if i > 0 {
            let mut dresid = Array2::<f64>::zeros(resid.dim());
            kernels::gemm(1.0, &dpre.view(), &w.view(), 0.0, &mut dresid);
            kernels::gemm(-1.0, &dresid.view(), &r.view(), 1.0, &mut dpre);
            dx = dpre;
        }
    }
    Ok((loss_sum * scale, grads))
}

/// Exact gradients of [`mse_loss`] over the batch; returns `(loss, grads)`.
pub fn backward(net: &Network, batch: &Batch) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let scale = 1.0 / batch.len() as f64;
    let shards: Vec<std::ops::Range<usize>> = (0..batch.len())
        .step_by(SHARD)
        .map(|start| start..(start + SHARD).min(batch.len()))
        .collect();
    let parts: Vec<Result<(f64, Gradients)>> = shards
        .into_par_iter()
        .map(|range| backward_shard(net, &batch.rows(range), scale))
        .collect();
    let mut loss = 0.0;
    let mut total = Gradients::zeros_like(&net.layers);
    for part in parts {
        let (l, g) = part?;
        loss += l;
        total.accumulate(&g);
    }
    total.check_finite()?;
    Ok((loss, total))
}

/// Adam moments and hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub first_moment: Vec<LayerParams>,
    pub second_moment: Vec<LayerParams>,
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Multiplier on the learning rate for the weight blocks.
    pub weight_lr_scale: f64,
}

impl OptimizerState {
    pub fn new(layers: &[LayerParams], learning_rate: f64) -> Self {
        let zeros = Gradients::zeros_like(layers).layers;
        Self {
            first_moment: zeros.clone(),
            second_moment: zeros,
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_lr_scale: 1.0,
        }
    }

    /// Add zero moments for layers appended to the network.
    pub fn grow_to(&mut self, layers: &[LayerParams]) {
        let zeros = Gradients::zeros_like(layers).layers;
        let k = self.first_moment.len();
        self.first_moment.extend_from_slice(&zeros[k..]);
        self.second_moment.extend_from_slice(&zeros[k..]);
    }
}

#[allow(clippy::too_many_arguments)]
fn adam_block(p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], st: &OptimizerState, lr: f64, c1: f64, c2: f64) {
    for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
        *m = st.beta1 * *m + (1.0 - st.beta1) * g;
        *v = st.beta2 * *v + (1.0 - st.beta2) * g * g;
        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + st.eps);
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(state: &mut OptimizerState, params: &mut [LayerParams], grads: &Gradients) -> Result<()> {
    if params.len() != grads.layers.len() || params.len() != state.first_moment.len() {
        return Err(Error::Dimension {
            expected: params.len(),
            found: grads.layers.len(),
        });
    }
    state.step += 1;
    let c1 = 1.0 - state.beta1.powi(state.step as i32);
    let c2 = 1.0 - state.beta2.powi(state.step as i32);
    let st = state.clone_hyper();
    for (i, (p, g)) in params.iter_mut().zip(&grads.layers).enumerate() {
        let (m, v) = (&mut state.first_moment[i], &mut state.second_moment[i]);
        adam_block(
            p.w_re.as_slice_mut().expect("standard layout"),
            g.w_re.as_slice().expect("standard layout"),
            m.w_re.as_slice_mut().expect("standard layout"),
            v.w_re.as_slice_mut().expect("standard layout"),
            &st,
            st.learning_rate * st.weight_lr_scale,
            c1,
            c2,
        );
        adam_block(
            p.w_im.as_slice_mut().expect("standard layout"),
            g.w_im.as_slice().expect("standard layout"),
            m.w_im.as_slice_mut().expect("standard layout"),
            v.w_im.as_slice_mut().expect("standard layout"),
            &st,
            st.learning_rate * st.weight_lr_scale,
            c1,
            c2,
        );
        adam_block(&mut p.thresholds, &g.thresholds, &mut m.thresholds, &mut v.thresholds, &st, st.learning_rate, c1, c2);
    }
    Ok(())
}

impl OptimizerState {
    fn clone_hyper(&self) -> OptimizerState {
        OptimizerState {
            first_moment: Vec::new(),
            second_moment: Vec::new(),
            ..*self
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Epochs per depth stage.
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Learning-rate multiplier for the weight matrices (thresholds use 1).
    pub weight_lr_scale: f64,
    /// Validations without improvement before the rate is halved.
    pub lr_patience: usize,
    pub lr_decay: f64,
    pub min_learning_rate: f64,
    /// `(start K, end K)`; `None` trains the network depth as given.
    pub curriculum: Option<(usize, usize)>,
    /// Validate every this many epochs.
    pub validate_every: usize,
    pub seed: u64,
    /// Epochs already completed; a resumed run continues the numbering and
    /// the per-epoch shuffle streams from here.
    pub start_epoch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 256,
            learning_rate: 2e-4,
            weight_lr_scale: 1.0,
            lr_patience: 10,
            lr_decay: 0.5,
            min_learning_rate: 1e-7,
            curriculum: None,
            validate_every: 1,
            seed: 0,
            start_epoch: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 || self.validate_every == 0 {
            return Err(Error::Config("batch size and validation cadence must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.weight_lr_scale >= 0.0) || !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Config("learning rate must be > 0 and decay in (0, 1]".into()));
        }
        if let Some((start, end)) = self.curriculum {
            if start == 0 || start > end {
                return Err(Error::Config(format!("invalid depth curriculum {start}..{end}")));
            }
        }
        Ok(())
    }
}

/// One row of the training history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub layers: usize,
    /// Mean training loss over the epoch's minibatches.
    pub train_mse: f64,
    /// Validation NMSE (noise-free set).
    pub val_nmse: f64,
    pub learning_rate: f64,
    pub is_best: bool,
}

/// Called after every validation; used for checkpointing and logging.
pub type Observer<'a> = dyn FnMut(&EpochRecord, &Network, &OptimizerState) -> Result<()> + 'a;

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the lowest validation NMSE at the final depth.
    pub best: Network,
    pub last: Network,
    pub state: OptimizerState,
    pub history: Vec<EpochRecord>,
    /// Best validation NMSE reached at each depth stage.
    pub depth_nmse: Vec<(usize, f64)>,
}

/// Validation NMSE over a set of samples, evaluated in chunks.
pub fn validation_nmse(net: &Network, samples: &[LabeledSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("empty validation set".into()));
    }
    let mut total = 0.0;
    for chunk in samples.chunks(1024) {
        let refs: Vec<&LabeledSample> = chunk.iter().collect();
        let batch = Batch::for_network(&refs, net);
        total += evaluate_batch(net, &batch)?.nmse * chunk.len() as f64;
    }
    Ok(total / samples.len() as f64)
}

/// Minibatch Adam on the MSE loss, validating on `val` (noise-free).
///
/// `state` resumes a previous run when given. The observer sees every
/// validation and may persist checkpoints.
pub fn train(
    mut net: Network,
    train_set: &[LabeledSample],
    val: &[LabeledSample],
    cfg: &TrainConfig,
    state: Option<OptimizerState>,
    observer: &mut Observer<'_>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    let n = net.steering().rows();
    if let Some(bad) = train_set.iter().chain(val).find(|s| s.g.len() != n) {
        return Err(Error::Dimension {
            expected: n,
            found: bad.g.len(),
        });
    }
    let stages: Vec<usize> = match cfg.curriculum {
        None => vec![net.num_layers()],
        Some((start, end)) => {
            net.layers.truncate(start.max(1).min(net.num_layers()));
            net.extend_to(start);
            (start..=end).collect()
        }
    };
    let mut state = state.unwrap_or_else(|| OptimizerState {
        weight_lr_scale: cfg.weight_lr_scale,
        ..OptimizerState::new(&net.layers, cfg.learning_rate)
    });
    let mut history = Vec::new();
    let mut depth_nmse = Vec::new();
    let mut best = net.clone();
    let mut epoch_counter = cfg.start_epoch;
    for &depth in &stages {
        net.extend_to(depth);
        state.grow_to(&net.layers);
        let mut best_nmse = f64::INFINITY;
        best = net.clone();
        let mut stale = 0usize;
        for _ in 0..cfg.epochs {
            epoch_counter += 1;
            let mut order: Vec<usize> = (0..train_set.len()).collect();
            rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut stream_rng(cfg.seed, epoch_counter as u64));
            let mut loss_total = 0.0;
            let mut batches = 0usize;
            for idx in order.chunks(cfg.batch_size) {
                let refs: Vec<&LabeledSample> = idx.iter().map(|&i| &train_set[i]).collect();
                let batch = Batch::for_network(&refs, &net);
                let (loss, grads) = backward(&net, &batch)?;
                if !loss.is_finite() {
                    return Err(Error::Numerical(format!(
                        "training loss became non-finite at epoch {epoch_counter} (lr {})",
                        state.learning_rate
                    )));
                }
                adam_step(&mut state, &mut net.layers, &grads)?;
                for layer in &mut net.layers {
                    layer.project_thresholds();
                }
                loss_total += loss;
                batches += 1;
            }
            if !epoch_counter.is_multiple_of(cfg.validate_every) {
                continue;
            }
            let val_nmse = if val.is_empty() {
                loss_total / batches as f64
            } else {
                validation_nmse(&net, val)?
            };
            if val_nmse.is_nan() {
                return Err(Error::Numerical(format!(
                    "validation NMSE is NaN at epoch {epoch_counter}, depth {depth}, lr {}",
                    state.learning_rate
                )));
            }
            let is_best = val_nmse < best_nmse;
            if is_best {
                best_nmse = val_nmse;
                best = net.clone();
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.lr_patience {
                    state.learning_rate = (state.learning_rate * cfg.lr_decay).max(cfg.min_learning_rate);
                    stale = 0;
                }
            }
            let record = EpochRecord {
                epoch: epoch_counter,
                layers: net.num_layers(),
                train_mse: loss_total / batches as f64,
                val_nmse,
                learning_rate: state.learning_rate,
                is_best,
            };
            history.push(record);
            observer(&record, &net, &state)?;
        }
        depth_nmse.push((depth, best_nmse));
    }
    Ok(TrainOutcome {
        best,
        last: net,
        state,
        history,
        depth_nmse,
    })
}

/// Initialize a network with `λ_init` calibrated on up to 1000 training
/// measurements, seen as the network sees them (RMS-scaled if enabled).
pub fn init_from_data(steering: &SteeringMatrix, config: NetworkConfig, samples: &[LabeledSample]) -> Result<Network> {
    let calib: Vec<Vec<Complex64>> = samples
        .iter()
        .take(1000)
        .map(|s| {
            let c = if config.input_scaling { input_scale(&s.g) } else { 1.0 };
            if c > 0.0 {
                s.g.iter().map(|z| z / c).collect()
            } else {
                s.g.clone()
            }
        })
        .collect();
    let lambda = calibrate_init_lambda(steering, calib.iter().map(|g| g.as_slice()))?;
    init_network(steering, config, lambda)
}

/// Which parameters of a layer a gradient-check block covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamBlock {
    WeightRe,
    WeightIm,
    Thresholds,
}

impl ParamBlock {
    pub fn name(self) -> &'static str {
        match self {
            ParamBlock::WeightRe => "W_re",
            ParamBlock::WeightIm => "W_im",
            ParamBlock::Thresholds => "theta",
        }
    }

    fn get_mut(self, p: &mut LayerParams, idx: usize) -> &mut f64 {
        match self {
            ParamBlock::WeightRe => &mut p.w_re.as_slice_mut().expect("standard layout")[idx],
            ParamBlock::WeightIm => &mut p.w_im.as_slice_mut().expect("standard layout")[idx],
            ParamBlock::Thresholds => &mut p.thresholds[idx],
        }
    }

    fn len(self, p: &LayerParams) -> usize {
        match self {
            ParamBlock::WeightRe => p.w_re.len(),
            ParamBlock::WeightIm => p.w_im.len(),
            ParamBlock::Thresholds => p.thresholds.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockReport {
    pub layer: usize,
    pub block: ParamBlock,
    pub max_rel_error: f64,
    pub probes: usize,
    /// Probes skipped because the perturbation crossed a kink.
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub blocks: Vec<BlockReport>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.blocks.iter().map(|b| b.max_rel_error).fold(0.0, f64::max)
    }

    pub fn excluded(&self) -> usize {
        self.blocks.iter().map(|b| b.excluded).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub step: f64,
    /// Weight coordinates probed per block (thresholds are all probed).
    pub probes_per_block: usize,
    pub seed: u64,
    /// Multiply one block of the analytic gradient by `factor` to test the
    /// detector: `(layer, block, factor)`.
    pub corrupt: Option<(usize, ParamBlock, f64)>,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-6,
            probes_per_block: 24,
            seed: 0,
            corrupt: None,
        }
    }
}

/// Selection sets and shrinkage branch of every entry in every layer.
fn activation_pattern(net: &Network, batch: &Batch) -> Result<Vec<u8>> {
    let (_, caches) = net.forward_batch_cached(&batch.measurements)?;
    let activation = net.config().activation;
    let mut pattern = Vec::new();
    for (layer, cache) in net.layers.iter().zip(&caches) {
        let t = &layer.thresholds;
        for (b, row) in cache.pre.rows().into_iter().enumerate() {
            let half = row.len() / 2;
            for l in 0..half {
                let code = if cache.selected[b].binary_search(&l).is_ok() {
                    3
                } else {
                    let r = row[l].hypot(row[l + half]);
                    match activation {
                        Activation::Soft => u8::from(r > t[0]),
                        Activation::Piecewise => {
                            if r <= t[0] {
                                0
                            } else if r <= t[1] {
                                1
                            } else {
                                2
                            }
                        }
                    }
                };
                pattern.push(code);
            }
        }
    }
    Ok(pattern)
}

/// Compare analytic gradients with central finite differences.
///
/// The relative error of a probe is `|a − d| / max(|a|, |d|, floor)` with the
/// floor at `1e-3` of the block's largest analytic entry, so coordinates whose
/// gradient is many orders below the block scale are judged on an absolute
/// scale. Probes whose perturbation changes any selection set or shrinkage
/// branch are excluded and counted.
pub fn grad_check(net: &Network, batch: &Batch, cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    use rand::Rng;
    let (_, mut grads) = backward(net, batch)?;
    if let Some((layer, block, factor)) = cfg.corrupt {
        let p = grads
            .layers
            .get_mut(layer)
            .ok_or_else(|| Error::InvalidArgument(format!("no layer {layer}")))?;
        match block {
            ParamBlock::WeightRe => p.w_re.mapv_inplace(|v| v * factor),
            ParamBlock::WeightIm => p.w_im.mapv_inplace(|v| v * factor),
            ParamBlock::Thresholds => p.thresholds.iter_mut().for_each(|v| *v *= factor),
        }
    }
    let base_pattern = activation_pattern(net, batch)?;
    let loss_at = |probe: &Network| -> Result<f64> {
        let out = probe.forward_batch_core(&batch.measurements)?;
        mse_loss(&out, &batch.targets)
    };
    let mut rng = stream_rng(cfg.seed, 0x67c);
    let mut blocks = Vec::new();
    for layer in 0..net.num_layers() {
        for block in [ParamBlock::WeightRe, ParamBlock::WeightIm, ParamBlock::Thresholds] {
            let len = block.len(&net.layers[layer]);
            let coords: Vec<usize> = if block == ParamBlock::Thresholds {
                (0..len).collect()
            } else {
                (0..cfg.probes_per_block).map(|_| rng.random_range(0..len)).collect()
            };
            let mut analytic_layer = grads.layers[layer].clone();
            let scale = (0..len)
                .map(|i| block.get_mut(&mut analytic_layer, i).abs())
                .fold(0.0, f64::max);
            let floor = (1e-3 * scale).max(f64::MIN_POSITIVE);
            let mut report = BlockReport {
                layer,
                block,
                max_rel_error: 0.0,
                probes: 0,
                excluded: 0,
            };
            for idx in coords {
                let mut plus = net.clone();
                *block.get_mut(&mut plus.layers[layer], idx) += cfg.step;
                let mut minus = net.clone();
                *block.get_mut(&mut minus.layers[layer], idx) -= cfg.step;
                if activation_pattern(&plus, batch)? != base_pattern || activation_pattern(&minus, batch)? != base_pattern {
                    report.excluded += 1;
                    continue;
                }
                let numeric = (loss_at(&plus)? - loss_at(&minus)?) / (2.0 * cfg.step);
                let analytic = *block.get_mut(&mut analytic_layer, idx);
                let denom = analytic.abs().max(numeric.abs()).max(floor);
                let err = (analytic - numeric).abs() / denom;
                report.max_rel_error = report.max_rel_error.max(err);
                report.probes += 1;
            }
            blocks.push(report);
        }
    }
    Ok(GradCheckReport { blocks })
}

/// Small randomized problem for gradient checks: N = 5, L = 16, K = 3, with
/// weights perturbed away from the initialization and a mixed batch of 8.
pub fn grad_check_fixture(activation: Activation, seed: u64) -> Result<(Network, Batch)> {
    use crate::geometry::{AcquisitionGeometry, ElevationGrid};
    use crate::network::SupportSchedule;
    use crate::simulation::{make_dataset, DatasetConfig, DatasetKind};
    use rand::Rng;
    let geo = AcquisitionGeometry::regular(5, -40.0, 40.0, 1000.0)?;
    let r = SteeringMatrix::build(&geo, &ElevationGrid::new(0.0, 15.0, 1.0)?)?;
    let cfg = NetworkConfig {
        layers: 3,
        activation,
        support: SupportSchedule::Constant(0.1),
        input_scaling: false,
    };
    let mut net = init_network(&r, cfg, 0.8)?;
    let mut rng = stream_rng(seed, 99);
    for layer in &mut net.layers {
        layer.w_re.mapv_inplace(|v| v * rng.random_range(0.7..1.3) + rng.random_range(-0.005..0.005));
        layer.w_im.mapv_inplace(|v| v * rng.random_range(0.7..1.3) + rng.random_range(-0.005..0.005));
        if activation == Activation::Piecewise {
            layer.thresholds[2] = rng.random_range(0.05..0.3);
            layer.thresholds[3] = rng.random_range(0.4..0.9);
        }
    }
    let data = make_dataset(
        &DatasetConfig {
            kind: DatasetKind::Mixed,
            count: 8,
            alpha_levels: vec![0.5, 1.0],
            seed: seed.wrapping_add(10),
            ..Default::default()
        },
        &r,
    )?;
    let refs: Vec<&LabeledSample> = data.iter().collect();
    Ok((net, Batch::from_samples(&refs, r.cols())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{AcquisitionGeometry, ElevationGrid};
    use crate::network::SupportSchedule;
    use crate::simulation::{make_dataset, DatasetConfig, DatasetKind};
    use num_complex::Complex64;
    use rand::Rng;

    fn small_steering() -> SteeringMatrix {
        let geo = AcquisitionGeometry::regular(5, -40.0, 40.0, 1000.0).unwrap();
        SteeringMatrix::build(&geo, &ElevationGrid::new(0.0, 15.0, 1.0).unwrap()).unwrap()
    }

    fn small_batch(r: &SteeringMatrix, count: usize, seed: u64) -> Batch {
        let cfg = DatasetConfig {
            kind: DatasetKind::Mixed,
            count,
            alpha_levels: vec![0.5, 1.0],
            seed,
            ..Default::default()
        };
        let data = make_dataset(&cfg, r).unwrap();
        let refs: Vec<&LabeledSample> = data.iter().collect();
        Batch::from_samples(&refs, r.cols())
    }

    fn perturbed_net(r: &SteeringMatrix, activation: Activation, seed: u64) -> Network {
        let cfg = NetworkConfig {
            layers: 3,
            activation,
            support: SupportSchedule::Constant(0.1),
            input_scaling: false,
        };
        let mut net = init_network(r, cfg, 0.8).unwrap();
        let mut rng = stream_rng(seed, 99);
        for layer in &mut net.layers {
            layer.w_re.mapv_inplace(|v| v * rng.random_range(0.7..1.3) + rng.random_range(-0.005..0.005));
            layer.w_im.mapv_inplace(|v| v * rng.random_range(0.7..1.3) + rng.random_range(-0.005..0.005));
            if activation == Activation::Piecewise {
                layer.thresholds[2] = rng.random_range(0.05..0.3);
                layer.thresholds[3] = rng.random_range(0.4..0.9);
            }
        }
        net
    }

    fn rows(v: &[Vec<Complex64>]) -> Array2<f64> {
        kernels::stack_rows(v.iter().map(|x| x.as_slice()), v[0].len())
    }

    #[test]
    fn mse_examples() {
        let truth = rows(&[vec![Complex64::new(0.0, 0.0); 3]]);
        let est = rows(&[vec![Complex64::new(1.0, 1.0), Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)]]);
        assert_eq!(mse_loss(&truth, &truth).unwrap(), 0.0);
        assert_eq!(mse_loss(&est, &truth).unwrap(), 2.0);
        let a = rows(&[vec![Complex64::new(1.0, 0.0)], vec![Complex64::new(0.0, 3.0)]]);
        let z = rows(&[vec![Complex64::new(0.0, 0.0)], vec![Complex64::new(0.0, 0.0)]]);
        assert_eq!(mse_loss(&a, &z).unwrap(), (1.0 + 9.0) / 2.0);
        assert!(mse_loss(&Array2::zeros((0, 2)), &Array2::zeros((0, 2))).is_err());
    }

    #[test]
    fn nmse_examples() {
        let truth = rows(&[vec![Complex64::new(1.0, 2.0), Complex64::new(0.0, -1.0)], vec![Complex64::new(3.0, 0.0), Complex64::new(0.0, 0.0)]]);
        assert_eq!(nmse(&truth, &truth).unwrap(), 0.0);
        assert!((nmse(&Array2::zeros(truth.dim()), &truth).unwrap() - 1.0).abs() < 1e-15);
        assert!((nmse(&(&truth * 2.0), &truth).unwrap() - 1.0).abs() < 1e-15);
        let zero_truth = Array2::zeros((1, 4));
        assert!(nmse(&zero_truth, &zero_truth).is_err());
    }

    #[test]
    fn zero_loss_gives_zero_gradients() {
        let r = small_steering();
        let net = perturbed_net(&r, Activation::Piecewise, 1);
        let mut batch = small_batch(&r, 6, 3);
        batch.targets = net.forward_batch_core(&batch.measurements).unwrap();
        let (loss, grads) = backward(&net, &batch).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(grads.max_abs(), 0.0);
    }

    #[test]
    fn scalar_chain_matches_hand_derivation() {
        // N = L = 1 with the only elevation at the origin, so R = [1]
        let r = small_steering().with_entries(Array2::from_elem((1, 1), Complex64::new(1.0, 0.0)));
        let cfg = NetworkConfig {
            layers: 1,
            activation: Activation::Soft,
            support: SupportSchedule::Constant(0.0),
            input_scaling: false,
        };
        let mut net = init_network(&r, cfg, 0.0).unwrap();
        let (a, theta, g, truth) = (0.8, 0.3, 2.0, 1.5);
        net.layers[0].w_re[[0, 0]] = a;
        net.layers[0].w_im[[0, 0]] = 0.0;
        net.layers[0].thresholds[0] = theta;
        let batch = Batch {
            measurements: Array2::from_shape_vec((1, 2), vec![g, 0.0]).unwrap(),
            targets: Array2::from_shape_vec((1, 2), vec![truth, 0.0]).unwrap(),
        };
        let out = a * g - theta;
        let (loss, grads) = backward(&net, &batch).unwrap();
        assert!((loss - (out - truth).powi(2)).abs() < 1e-15);
        assert!((grads.layers[0].w_re[[0, 0]] - 2.0 * (out - truth) * g).abs() < 1e-14);
        assert!(grads.layers[0].w_im[[0, 0]].abs() < 1e-14);
        assert!((grads.layers[0].thresholds[0] + 2.0 * (out - truth)).abs() < 1e-14);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let r = small_steering();
        for activation in [Activation::Soft, Activation::Piecewise] {
            for seed in 0..2 {
                let net = perturbed_net(&r, activation, seed);
                let batch = small_batch(&r, 8, 10 + seed);
                let report = grad_check(&net, &batch, &GradCheckConfig { seed, ..Default::default() }).unwrap();
                assert!(report.max_rel_error() < 1e-5, "{activation:?} {report:?}");
                assert!(report.blocks.iter().map(|b| b.probes).sum::<usize>() > 100);
            }
        }
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        let r = small_steering();
        let net = perturbed_net(&r, Activation::Soft, 4);
        let batch = small_batch(&r, 8, 4);
        let cfg = GradCheckConfig {
            corrupt: Some((1, ParamBlock::WeightIm, 1.1)),
            ..Default::default()
        };
        let report = grad_check(&net, &batch, &cfg).unwrap();
        assert!(report.max_rel_error() > 0.05);
    }

    #[test]
    fn sharded_backward_matches_single_shard() {
        let r = small_steering();
        let net = perturbed_net(&r, Activation::Piecewise, 2);
        let batch = small_batch(&r, 150, 7);
        let (loss, grads) = backward(&net, &batch).unwrap();
        let (loss1, grads1) = backward_shard(&net, &batch, 1.0 / 150.0).unwrap();
        assert!((loss - loss1).abs() < 1e-12 * loss.max(1.0));
        let mut diff = grads.clone();
        for (d, g) in diff.layers.iter_mut().zip(&grads1.layers) {
            d.w_re -= &g.w_re;
            d.w_im -= &g.w_im;
            for (x, y) in d.thresholds.iter_mut().zip(&g.thresholds) {
                *x -= y;
            }
        }
        assert!(diff.max_abs() < 1e-12 * grads.max_abs().max(1.0), "{} {}", diff.max_abs(), grads.max_abs());
    }

    #[test]
    fn adam_zero_gradient_keeps_parameters() {
        let r = small_steering();
        let mut net = perturbed_net(&r, Activation::Soft, 0);
        let before = net.layers.clone();
        let mut state = OptimizerState::new(&net.layers, 1e-3);
        adam_step(&mut state, &mut net.layers, &Gradients::zeros_like(&before)).unwrap();
        assert_eq!(net.layers, before);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let r = small_steering();
        let mut net = perturbed_net(&r, Activation::Soft, 0);
        let before = net.layers.clone();
        let mut grads = Gradients::zeros_like(&before);
        for p in &mut grads.layers {
            p.w_re.fill(0.37);
            p.w_im.fill(-2.0);
            p.thresholds.fill(5.0);
        }
        let mut state = OptimizerState::new(&net.layers, 1e-3);
        adam_step(&mut state, &mut net.layers, &grads).unwrap();
        for (a, b) in net.layers.iter().zip(&before) {
            assert!(a.w_re.iter().zip(b.w_re.iter()).all(|(x, y)| ((y - x) - 1e-3).abs() < 1e-8));
            assert!(a.w_im.iter().zip(b.w_im.iter()).all(|(x, y)| ((x - y) - 1e-3).abs() < 1e-8));
        }
    }

    fn quick_config(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 16,
            learning_rate: 1e-3,
            seed: 5,
            ..Default::default()
        }
    }

    fn small_sets(r: &SteeringMatrix) -> (Vec<LabeledSample>, Vec<LabeledSample>) {
        let train_cfg = DatasetConfig {
            count: 64,
            seed: 1,
            ..Default::default()
        };
        let val_cfg = DatasetConfig {
            count: 32,
            seed: 2,
            noise_free: true,
            ..Default::default()
        };
        (make_dataset(&train_cfg, r).unwrap(), make_dataset(&val_cfg, r).unwrap())
    }

    #[test]
    fn training_is_bit_reproducible() {
        let r = small_steering();
        let (tr, val) = small_sets(&r);
        let run = || {
            let net = perturbed_net(&r, Activation::Piecewise, 0);
            train(net, &tr, &val, &quick_config(3), None, &mut |_, _, _| Ok(())).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.last.layers, b.last.layers);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn overfits_a_single_sample() {
        let r = small_steering();
        let (tr, _) = small_sets(&r);
        let one = vec![tr[1].clone()];
        let net = perturbed_net(&r, Activation::Piecewise, 0);
        let start = validation_nmse(&net, &one).unwrap();
        let cfg = TrainConfig {
            epochs: 1500,
            batch_size: 1,
            learning_rate: 2e-3,
            lr_patience: 50,
            ..Default::default()
        };
        let out = train(net, &one, &one, &cfg, None, &mut |_, _, _| Ok(())).unwrap();
        let end = validation_nmse(&out.best, &one).unwrap();
        assert!(end < 1e-3 && end < start * 1e-2, "{start} -> {end}");
    }

    #[test]
    fn thresholds_stay_projected() {
        let r = small_steering();
        let (tr, val) = small_sets(&r);
        let net = perturbed_net(&r, Activation::Piecewise, 3);
        let out = train(net, &tr, &val, &quick_config(4), None, &mut |_, net, _| {
            for layer in &net.layers {
                assert!(layer.thresholds[0] >= 0.0 && layer.thresholds[1] >= layer.thresholds[0]);
            }
            Ok(())
        })
        .unwrap();
        assert_eq!(out.history.len(), 4);
    }

    #[test]
    fn curriculum_grows_depth() {
        let r = small_steering();
        let (tr, val) = small_sets(&r);
        let net = perturbed_net(&r, Activation::Soft, 3);
        let cfg = TrainConfig {
            curriculum: Some((1, 3)),
            ..quick_config(2)
        };
        let out = train(net, &tr, &val, &cfg, None, &mut |_, _, _| Ok(())).unwrap();
        assert_eq!(out.last.num_layers(), 3);
        assert_eq!(out.depth_nmse.iter().map(|d| d.0).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert_eq!(out.state.first_moment.len(), 3);
        assert_eq!(out.history.len(), 6);
    }

    #[test]
    fn nan_parameters_abort_training() {
        let r = small_steering();
        let (tr, val) = small_sets(&r);
        let mut net = perturbed_net(&r, Activation::Soft, 3);
        net.layers[0].w_re[[0, 0]] = f64::NAN;
        let err = train(net, &tr, &val, &quick_config(1), None, &mut |_, _, _| Ok(())).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
