//! Per-epoch training steps: the dynamic task-weighting optimizer (softmax
//! task weights driven by relative log-loss improvements) and the averaged
//! loss baseline. Both apply one clipped full-batch gradient step per epoch.

use crate::array::Array2D;
use crate::autodiff::{clip_global_norm, weighted_sum, GradientSet, Tape};
use crate::error::{Error, Result};
use crate::model::{build_task_loss, ModelParams, Sample, TaskBatch};
use crate::parallel;

/// Optimizer hyperparameters. `model_lr` steps the network parameters,
/// `logit_lr` steps the task logits, `logit_reg` decays the logits toward
/// zero, and `epsilon` keeps adjusted losses strictly positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeriHyper {
    pub model_lr: f64,
    pub logit_lr: f64,
    pub logit_reg: f64,
    pub epsilon: f64,
    pub max_grad_norm: f64,
}

impl Default for FeriHyper {
    fn default() -> Self {
        FeriHyper {
            model_lr: 0.05,
            logit_lr: 0.1,
            logit_reg: 1e-6,
            epsilon: 1e-8,
            max_grad_norm: 1.0,
        }
    }
}

impl FeriHyper {
    pub fn validate(&self) -> Result<()> {
        if self.model_lr <= 0.0 {
            return Err(Error::Config("model learning rate must be positive".into()));
        }
        // logit_lr = 0 freezes the logits, which is a supported ablation
        if self.logit_lr < 0.0 {
            return Err(Error::Config("logit learning rate must be >= 0".into()));
        }
        if self.logit_reg < 0.0 {
            return Err(Error::Config("logit regularization must be >= 0".into()));
        }
        if self.epsilon <= 0.0 {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        if self.max_grad_norm <= 0.0 {
            return Err(Error::Config("max_grad_norm must be positive".into()));
        }
        Ok(())
    }
}

/// Mutable optimizer state: the task logits (starting at zero so epoch 0
/// weighs every task equally), the epoch counter, and the adjusted losses
/// cached from the post-update forward pass of the previous epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct FeriState {
    pub logits: Vec<f64>,
    pub hyper: FeriHyper,
    pub cached_delta: Option<Vec<f64>>,
    pub epoch: usize,
}

impl FeriState {
    pub fn new(num_tasks: usize, hyper: FeriHyper) -> Result<Self> {
        if num_tasks == 0 {
            return Err(Error::InvalidArgument("num_tasks must be >= 1".into()));
        }
        hyper.validate()?;
        Ok(FeriState {
            logits: vec![0.0; num_tasks],
            hyper,
            cached_delta: None,
            epoch: 0,
        })
    }
}

/// What one epoch observed and did.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochResult {
    /// Per-task losses at the start of the epoch.
    pub losses_before: Vec<f64>,
    /// Per-task losses after the parameter step; `None` for the baseline,
    /// which does not re-evaluate within the epoch.
    pub losses_after: Option<Vec<f64>>,
    /// Task weights applied this epoch (uniform 1/M for the baseline).
    pub weights_used: Vec<f64>,
    /// Weighted combined loss at the start of the epoch.
    pub combined_loss: f64,
}

/// Numerically stable softmax: z_m = exp(w_m) / sum_k exp(w_k).
pub fn softmax_weights(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::InvalidArgument("softmax of an empty vector".into()));
    }
    if logits.iter().any(|w| !w.is_finite()) {
        return Err(Error::InvalidArgument("softmax of non-finite logits".into()));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|w| (w - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Jacobian of `softmax_weights` at weights `z`: J[i][j] = z_i (1{i=j} - z_j).
pub fn softmax_jacobian(z: &[f64]) -> Array2D {
    let m = z.len();
    let mut jac = Array2D::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            let indicator = if i == j { 1.0 } else { 0.0 };
            jac.set(i, j, z[i] * (indicator - z[j]));
        }
    }
    jac
}

/// Elementwise `loss + epsilon`, rejecting negative losses.
pub fn adjusted_losses(losses: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    if epsilon <= 0.0 {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    for (task, &l) in losses.iter().enumerate() {
        if l < 0.0 || !l.is_finite() {
            return Err(Error::NegativeLoss { task, value: l });
        }
    }
    Ok(losses.iter().map(|l| l + epsilon).collect())
}

/// r = sum_m z_m / delta_m, the constant that renormalizes the weighted
/// log-loss gradient combination back onto the probability simplex.
pub fn renorm_constant(z: &[f64], delta: &[f64]) -> Result<f64> {
    if z.len() != delta.len() || z.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "renorm_constant needs matching nonempty vectors, got {} and {}",
            z.len(),
            delta.len()
        )));
    }
    for (task, &d) in delta.iter().enumerate() {
        if d <= 0.0 {
            return Err(Error::NegativeLoss { task, value: d });
        }
    }
    Ok(z.iter().zip(delta).map(|(zm, dm)| zm / dm).sum())
}

/// One weighted parameter step: direction = sum_m c_m grad_m with
/// c_m = z_m / (delta_m * r); the combined direction is clipped to
/// `max_grad_norm` before scaling by -model_lr. Returns the combination
/// coefficients, which sum to 1 by construction.
pub fn feri_param_step(
    params: &mut ModelParams,
    task_grads: &[GradientSet],
    z: &[f64],
    delta: &[f64],
    hyper: &FeriHyper,
) -> Result<Vec<f64>> {
    if task_grads.len() != z.len() || z.len() != delta.len() {
        return Err(Error::InvalidArgument(format!(
            "feri_param_step needs one gradient, weight and loss per task; got {}, {}, {}",
            task_grads.len(),
            z.len(),
            delta.len()
        )));
    }
    let r = renorm_constant(z, delta)?;
    let coefficients: Vec<f64> = z
        .iter()
        .zip(delta)
        .map(|(zm, dm)| zm / (dm * r))
        .collect();
    let direction = weighted_sum(task_grads, &coefficients)?;
    let direction = clip_global_norm(direction, hyper.max_grad_norm)?;
    params.apply_step(&direction, hyper.model_lr)?;
    Ok(coefficients)
}

/// Logit update w' = w - logit_lr * (J^T d + logit_reg * w) with
/// d = log(delta_t) - log(delta_next) and J the softmax Jacobian at the
/// weights used this epoch. A task whose log-loss dropped faster receives a
/// smaller logit next epoch.
pub fn logit_step(
    logits: &[f64],
    z: &[f64],
    delta_t: &[f64],
    delta_next: &[f64],
    hyper: &FeriHyper,
) -> Result<Vec<f64>> {
    let m = logits.len();
    if m == 0 || z.len() != m || delta_t.len() != m || delta_next.len() != m {
        return Err(Error::InvalidArgument(
            "logit_step needs equal-length nonempty logits, weights and loss vectors".into(),
        ));
    }
    for (task, &d) in delta_t.iter().chain(delta_next.iter()).enumerate() {
        if d <= 0.0 {
            return Err(Error::NegativeLoss { task: task % m, value: d });
        }
    }
    let d: Vec<f64> = delta_t
        .iter()
        .zip(delta_next)
        .map(|(a, b)| a.ln() - b.ln())
        .collect();
    let jac = softmax_jacobian(z);
    // delta = J^T d; J is symmetric but the transpose is written out so the
    // code matches the jacobian contract it is tested against.
    let mut step = vec![0.0; m];
    for (i, out) in step.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (j, &dj) in d.iter().enumerate() {
            acc += jac.at(j, i) * dj;
        }
        *out = acc;
    }
    Ok(logits
        .iter()
        .zip(&step)
        .map(|(w, s)| w - hyper.logit_lr * (s + hyper.logit_reg * w))
        .collect())
}

/// Per-task training split, batched once so epochs avoid re-gathering.
#[derive(Debug, Clone)]
pub struct TrainData {
    pub batches: Vec<TaskBatch>,
}

impl TrainData {
    /// Partition samples by group; every one of the `num_tasks` groups must
    /// be inhabited.
    pub fn new(samples: &[Sample], num_tasks: usize) -> Result<TrainData> {
        let mut buckets: Vec<Vec<&Sample>> = vec![Vec::new(); num_tasks];
        for s in samples {
            if s.group >= num_tasks {
                return Err(Error::Config(format!(
                    "sample group {} out of range for {num_tasks} tasks",
                    s.group
                )));
            }
            buckets[s.group].push(s);
        }
        let batches = buckets
            .into_iter()
            .enumerate()
            .map(|(m, bucket)| TaskBatch::from_samples(bucket, m))
            .collect::<Result<Vec<_>>>()?;
        Ok(TrainData { batches })
    }

    pub fn num_tasks(&self) -> usize {
        self.batches.len()
    }
}

/// Loss and parameter gradient of one task at the current parameters.
fn task_loss_and_grad(params: &ModelParams, batch: &TaskBatch, m: usize) -> Result<(f64, GradientSet)> {
    let mut tape = Tape::new();
    let nodes = params.register_on_tape(&mut tape);
    let graph = build_task_loss(&mut tape, params, &nodes, batch, m)?;
    let loss = tape.value(graph.loss).scalar_value()?;
    let grads = tape.backward(graph.loss)?;
    Ok((loss, grads))
}

/// Loss of one task at the current parameters (no gradients).
fn task_loss_only(params: &ModelParams, batch: &TaskBatch, m: usize) -> Result<f64> {
    let mut tape = Tape::new();
    let nodes = params.register_on_tape(&mut tape);
    let graph = build_task_loss(&mut tape, params, &nodes, batch, m)?;
    tape.value(graph.loss).scalar_value()
}

fn per_task_losses(params: &ModelParams, data: &TrainData) -> Result<Vec<f64>> {
    parallel::map_collect(&data.batches, |batch| {
        task_loss_only(params, batch, batch.group)
    })
    .into_iter()
    .collect()
}

fn check_finite(losses: &[f64], epoch: usize) -> Result<()> {
    if let Some(task) = losses.iter().position(|l| !l.is_finite()) {
        return Err(Error::Divergence { epoch, task });
    }
    Ok(())
}

/// One epoch of the dynamic task-weighting optimizer: adjusted losses,
/// softmax weights, renormalized weighted parameter step, post-update loss
/// re-evaluation, and the softmax-Jacobian logit step. The re-evaluated
/// losses are cached as the next epoch's starting losses.
pub fn train_epoch_feri(
    params: &mut ModelParams,
    state: &mut FeriState,
    data: &TrainData,
) -> Result<EpochResult> {
    let m = data.num_tasks();
    if state.logits.len() != m {
        return Err(Error::InvalidArgument(format!(
            "state tracks {} tasks but the data has {m}",
            state.logits.len()
        )));
    }
    let epoch = state.epoch;
    let epsilon = state.hyper.epsilon;

    // Per-task losses and gradients at the current parameters. The cached
    // post-update losses from the previous epoch are this epoch's losses.
    let outcomes: Vec<Result<(f64, GradientSet)>> =
        parallel::map_collect(&data.batches, |batch| {
            task_loss_and_grad(params, batch, batch.group)
        });
    let mut losses = Vec::with_capacity(m);
    let mut grads = Vec::with_capacity(m);
    for outcome in outcomes {
        let (loss, grad) = outcome?;
        losses.push(loss);
        grads.push(grad);
    }
    check_finite(&losses, epoch)?;
    // Reuse the cached adjusted losses bitwise when present, so the next
    // epoch's delta_t is definitionally the delta_{t+1} computed below.
    let (losses_before, delta_t) = match state.cached_delta.take() {
        Some(cached) => {
            let raw: Vec<f64> = cached.iter().map(|d| d - epsilon).collect();
            (raw, cached)
        }
        None => {
            let delta = adjusted_losses(&losses, epsilon)?;
            (losses, delta)
        }
    };
    let z = softmax_weights(&state.logits)?;
    let combined_loss = z
        .iter()
        .zip(&losses_before)
        .map(|(zm, lm)| zm * lm)
        .sum::<f64>();

    feri_param_step(params, &grads, &z, &delta_t, &state.hyper)?;

    // Re-evaluate at the updated parameters; doubles as the next epoch's
    // starting losses.
    let losses_after = per_task_losses(params, data)?;
    check_finite(&losses_after, epoch)?;
    let delta_next = adjusted_losses(&losses_after, epsilon)?;

    state.logits = logit_step(&state.logits, &z, &delta_t, &delta_next, &state.hyper)?;
    state.cached_delta = Some(delta_next);
    state.epoch += 1;

    Ok(EpochResult {
        losses_before,
        losses_after: Some(losses_after),
        weights_used: z,
        combined_loss,
    })
}

/// One epoch of the baseline: a single clipped gradient step on the plain
/// average of the per-task losses, computed on one tape so the gradient of
/// the mean is taken directly.
pub fn train_epoch_baseline(
    params: &mut ModelParams,
    data: &TrainData,
    model_lr: f64,
    max_grad_norm: f64,
    epoch: usize,
) -> Result<EpochResult> {
    let m = data.num_tasks();
    let mut tape = Tape::new();
    let nodes = params.register_on_tape(&mut tape);
    let mut loss_ids = Vec::with_capacity(m);
    for batch in &data.batches {
        let graph = build_task_loss(&mut tape, params, &nodes, batch, batch.group)?;
        loss_ids.push(graph.loss);
    }
    let stacked = tape.concat_cols(&loss_ids)?;
    let mean = tape.mean_all(stacked)?;

    let losses_before: Vec<f64> = loss_ids
        .iter()
        .map(|&id| tape.value(id).at(0, 0))
        .collect();
    check_finite(&losses_before, epoch)?;
    let combined_loss = tape.value(mean).at(0, 0);

    let grads = tape.backward(mean)?;
    let direction = clip_global_norm(grads, max_grad_norm)?;
    params.apply_step(&direction, model_lr)?;

    Ok(EpochResult {
        losses_before,
        losses_after: None,
        weights_used: vec![1.0 / m as f64; m],
        combined_loss,
    })
}
