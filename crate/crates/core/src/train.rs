//! Losses, optimizers, and the supervised training loop for the unrolled
//! networks.
//!
//! Determinism contract: given (seed, config, dataset) the final parameters
//! are bit-identical across runs. Shuffling is Fisher-Yates over the seeded
//! generator, and batch gradients are accumulated in ascending sample index
//! regardless of how many worker threads computed them.

use crate::datagen::Dataset;
use crate::error::{contract, Error, Result};
use crate::matrix::Matrix;
use crate::metrics::nmse;
use crate::nets::Model;
use crate::rng::Rng;
use crate::tape::Tape;
use std::time::Instant;

/// Squared-error loss `(1/T)·Σ_t ‖pred_t − target_t‖₂²` over T columns.
/// For a single column this is the plain squared distance.
pub fn mse_loss(pred: &Matrix, target: &Matrix) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape {
            op: "mse_loss",
            lhs: pred.shape(),
            rhs: target.shape(),
        });
    }
    let mut total = 0.0;
    for (p, t) in pred.as_slice().iter().zip(target.as_slice()) {
        let d = p - t;
        total += d * d;
    }
    Ok(total / pred.cols() as f64)
}

/// Support-masked loss: mean of `B·|p−t|² + w·(1−B)·|p|` over all entries,
/// where the mask `B` is 1 exactly where the target is nonzero. Penalizes
/// error on the support and leakage off it.
pub fn masked_loss(pred: &Matrix, target: &Matrix, bg_weight: f64) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape {
            op: "masked_loss",
            lhs: pred.shape(),
            rhs: target.shape(),
        });
    }
    if bg_weight < 0.0 {
        return Err(contract(format!(
            "masked_loss requires a nonnegative background weight, got {bg_weight}"
        )));
    }
    let mut total = 0.0;
    for (p, t) in pred.as_slice().iter().zip(target.as_slice()) {
        if *t != 0.0 {
            let d = p - t;
            total += d * d;
        } else {
            total += bg_weight * p.abs();
        }
    }
    Ok(total / (pred.rows() * pred.cols()) as f64)
}

/// Which loss the training loop records on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Mse,
    Masked,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    /// SGD with heavy-ball momentum: v ← γ·v + g; p ← p − lr·v.
    Sgd,
    /// Adam with bias correction.
    Adam,
}

/// Hyperparameters for [`train`].
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub loss: LossKind,
    /// Background weight of the masked loss; ignored for MSE.
    pub lambda_loss: f64,
    pub seed: u64,
    /// Fraction of training samples held out for validation (by shuffled index).
    pub validation_fraction: f64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(contract("epochs must be ≥ 1"));
        }
        if self.batch == 0 {
            return Err(contract("batch size must be ≥ 1"));
        }
        if self.lr < 0.0 {
            return Err(contract("learning rate must be nonnegative"));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(contract("validation fraction must lie in [0, 1)"));
        }
        Ok(())
    }

    /// FNV-1a hash of the canonical field serialization; stored in reports
    /// and checkpoints as provenance.
    pub fn hash(&self) -> u64 {
        let text = format!(
            "batch={}\nepochs={}\nlambda_loss={}\nloss={:?}\nlr={}\noptimizer={:?}\nseed={}\nval={}\n",
            self.batch,
            self.epochs,
            self.lambda_loss,
            self.loss,
            self.lr,
            self.optimizer,
            self.seed,
            self.validation_fraction,
        );
        crate::container::fnv1a64(text.as_bytes())
    }
}

const SGD_MOMENTUM: f64 = 0.9;
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Optimizer state over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    kind: OptimizerKind,
    step: u64,
    velocity: Vec<f64>,
    second_moment: Vec<f64>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, dim: usize) -> Self {
        Self {
            kind,
            step: 0,
            velocity: vec![0.0; dim],
            second_moment: vec![0.0; dim],
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }
}

/// One optimizer update `params ← params − lr·direction(grads)`, in place.
pub fn optimizer_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut OptimizerState,
    lr: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.velocity.len() {
        return Err(Error::Shape {
            op: "optimizer_step",
            lhs: (params.len(), 1),
            rhs: (grads.len(), 1),
        });
    }
    state.step += 1;
    match state.kind {
        OptimizerKind::Sgd => {
            for i in 0..params.len() {
                state.velocity[i] = SGD_MOMENTUM * state.velocity[i] + grads[i];
                params[i] -= lr * state.velocity[i];
            }
        }
        OptimizerKind::Adam => {
            let t = state.step as i32;
            let bc1 = 1.0 - ADAM_BETA1.powi(t);
            let bc2 = 1.0 - ADAM_BETA2.powi(t);
            for i in 0..params.len() {
                let g = grads[i];
                state.velocity[i] = ADAM_BETA1 * state.velocity[i] + (1.0 - ADAM_BETA1) * g;
                state.second_moment[i] =
                    ADAM_BETA2 * state.second_moment[i] + (1.0 - ADAM_BETA2) * g * g;
                let m_hat = state.velocity[i] / bc1;
                let v_hat = state.second_moment[i] / bc2;
                params[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
        }
    }
    Ok(())
}

/// Per-epoch training trajectory plus final parameters and provenance.
#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Mean per-sample training loss per epoch.
    pub train_loss: Vec<f64>,
    /// Validation NMSE against the stored supervision targets, per epoch.
    pub val_nmse_target: Vec<f64>,
    /// Validation NMSE against the planted codes, per epoch (equals the
    /// target column when the dataset's targets are the planted codes).
    pub val_nmse_planted: Vec<f64>,
    /// Wall-clock seconds per epoch; timing only, excluded from determinism
    /// comparisons.
    pub epoch_seconds: Vec<f64>,
    pub wall_seconds: f64,
    pub final_model: Model,
    pub config_hash: u64,
    pub seed: u64,
}

// Per-sample forward + backward on a fresh tape.
fn sample_backward(
    model: &Model,
    y: &Matrix,
    target: &Matrix,
    loss_kind: LossKind,
    lambda_loss: f64,
) -> Result<(f64, crate::tape::Gradients, Vec<crate::tape::Var>)> {
    let mut tape = Tape::new();
    let (output, param_vars) = model.forward_on_tape(&mut tape, y)?;
    let target_var = tape.leaf(target.clone());
    let loss = match loss_kind {
        LossKind::Mse => tape.mse_loss(output, target_var)?,
        LossKind::Masked => tape.masked_loss(output, target_var, lambda_loss)?,
    };
    let loss_value = tape.value(loss).get(0, 0);
    let grads = tape.backward(loss)?;
    Ok((loss_value, grads, param_vars))
}

// Per-sample loss and flattened gradient (used by the threaded path, which
// must hold per-sample results to reduce them in ascending index).
fn sample_gradient(
    model: &Model,
    y: &Matrix,
    target: &Matrix,
    loss_kind: LossKind,
    lambda_loss: f64,
) -> Result<(f64, Vec<f64>)> {
    let (loss_value, grads, param_vars) = sample_backward(model, y, target, loss_kind, lambda_loss)?;
    let mut flat = Vec::with_capacity(model.param_count());
    for v in &param_vars {
        grads.extend_flat(*v, &mut flat);
    }
    Ok((loss_value, flat))
}

// Adds one sample's gradient straight into the batch accumulator, in the
// same per-coordinate order as summing materialized flats.
fn accumulate_sample_gradient(
    model: &Model,
    y: &Matrix,
    target: &Matrix,
    loss_kind: LossKind,
    lambda_loss: f64,
    acc: &mut [f64],
) -> Result<f64> {
    let (loss_value, grads, param_vars) = sample_backward(model, y, target, loss_kind, lambda_loss)?;
    let mut offset = 0;
    for v in &param_vars {
        let len = v.shape().0 * v.shape().1;
        grads.add_flat(*v, &mut acc[offset..offset + len]);
        offset += len;
    }
    Ok(loss_value)
}

/// Mean loss and mean gradient over a batch of sample indices.
///
/// Per-sample tapes are independent; when `URK_THREADS` allows more than one
/// worker they are recorded concurrently, but the reduction always sums in
/// ascending sample index, so the result is identical to the serial run.
pub fn batch_gradient(
    model: &Model,
    data_y: &Matrix,
    data_x: &Matrix,
    indices: &[usize],
    loss_kind: LossKind,
    lambda_loss: f64,
) -> Result<(f64, Vec<f64>)> {
    let workers = crate::worker_threads().min(indices.len().max(1));
    let dim = model.param_count();

    if workers <= 1 {
        // serial path: accumulate in place, ascending sample index
        let mut grad_sum = vec![0.0; dim];
        let mut loss_sum = 0.0;
        for &idx in indices {
            loss_sum += accumulate_sample_gradient(
                model,
                &data_y.col(idx),
                &data_x.col(idx),
                loss_kind,
                lambda_loss,
                &mut grad_sum,
            )?;
        }
        let count = indices.len() as f64;
        for g in &mut grad_sum {
            *g /= count;
        }
        return Ok((loss_sum / count, grad_sum));
    }

    let mut per_sample: Vec<Option<(f64, Vec<f64>)>> = vec![None; indices.len()];
    {
        let results: Vec<Result<(usize, (f64, Vec<f64>))>> = std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for (chunk_id, chunk) in indices.chunks(indices.len().div_ceil(workers)).enumerate() {
                let base = chunk_id * indices.len().div_ceil(workers);
                handles.push(scope.spawn(move || {
                    let mut out = Vec::with_capacity(chunk.len());
                    for (off, &idx) in chunk.iter().enumerate() {
                        let g = sample_gradient(
                            model,
                            &data_y.col(idx),
                            &data_x.col(idx),
                            loss_kind,
                            lambda_loss,
                        )?;
                        out.push((base + off, g));
                    }
                    Ok(out)
                }));
            }
            handles
                .into_iter()
                .flat_map(|h| match h.join().expect("worker panicked") {
                    Ok(v) => v.into_iter().map(Ok).collect::<Vec<_>>(),
                    Err(e) => vec![Err(e)],
                })
                .collect()
        });
        for r in results {
            let (slot, g) = r?;
            per_sample[slot] = Some(g);
        }
    }

    let mut grad_sum = vec![0.0; dim];
    let mut loss_sum = 0.0;
    for entry in per_sample {
        let (loss, grad) = entry.expect("all samples computed");
        loss_sum += loss;
        for (acc, g) in grad_sum.iter_mut().zip(&grad) {
            *acc += g;
        }
    }
    let count = indices.len() as f64;
    for g in &mut grad_sum {
        *g /= count;
    }
    Ok((loss_sum / count, grad_sum))
}

/// Deterministic validation split: one Fisher-Yates pass over the sample
/// indices, first `fraction` of the shuffled order held out. The generator
/// is taken by reference so the training loop continues on the same stream.
pub fn validation_split(total: usize, fraction: f64, rng: &mut Rng) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..total).collect();
    rng.shuffle(&mut order);
    let val_count = ((total as f64) * fraction).floor() as usize;
    let val = order[..val_count].to_vec();
    let train = order[val_count..].to_vec();
    (val, train)
}

/// Runs the supervised mini-batch loop and returns the report.
///
/// The dataset's training columns are split `1 − validation_fraction` /
/// `validation_fraction` by a seeded shuffle; batches re-shuffle the training
/// portion every epoch from the same generator stream.
pub fn train(model: Model, data: &Dataset, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let y_train = data
        .y_train
        .as_ref()
        .ok_or_else(|| contract("dataset has no training measurements"))?;
    let x_train = data
        .x_train
        .as_ref()
        .ok_or_else(|| contract("dataset has no training targets"))?;
    let x_planted = data.x_planted_train.as_ref();
    let total = y_train.cols();
    if total == 0 {
        return Err(contract("dataset has zero training samples"));
    }

    let started = Instant::now();
    let mut rng = Rng::new(cfg.seed);
    let (val_idx, mut train_idx) = validation_split(total, cfg.validation_fraction, &mut rng);

    let mut params = model.flatten();
    let mut current = model;
    let mut opt = OptimizerState::new(cfg.optimizer, params.len());

    let mut report = TrainReport {
        train_loss: Vec::with_capacity(cfg.epochs),
        val_nmse_target: Vec::with_capacity(cfg.epochs),
        val_nmse_planted: Vec::with_capacity(cfg.epochs),
        epoch_seconds: Vec::with_capacity(cfg.epochs),
        wall_seconds: 0.0,
        final_model: current.clone(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
    };

    for epoch in 1..=cfg.epochs {
        let epoch_started = Instant::now();
        rng.shuffle(&mut train_idx);
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for batch in train_idx.chunks(cfg.batch) {
            let (loss, grad) = batch_gradient(
                &current,
                y_train,
                x_train,
                batch,
                cfg.loss,
                cfg.lambda_loss,
            )
            .map_err(|e| match e {
                // diverged parameters surface as non-finite forward values
                Error::Numeric(message) => Error::Training { epoch, message },
                other => other,
            })?;
            if !loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    message: format!("batch loss became non-finite ({loss})"),
                });
            }
            epoch_loss += loss * batch.len() as f64;
            seen += batch.len();
            optimizer_step(&mut params, &grad, &mut opt, cfg.lr)?;
            current.unflatten(&params)?;
        }
        report.train_loss.push(epoch_loss / seen.max(1) as f64);

        let (vs_target, vs_planted) = if val_idx.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            validation_nmse(&current, y_train, x_train, x_planted, &val_idx)?
        };
        if report.train_loss.last().is_some_and(|l| !l.is_finite()) {
            return Err(Error::Training {
                epoch,
                message: "epoch loss became non-finite".into(),
            });
        }
        report.val_nmse_target.push(vs_target);
        report.val_nmse_planted.push(vs_planted);
        report.epoch_seconds.push(epoch_started.elapsed().as_secs_f64());
    }

    report.final_model = current;
    report.wall_seconds = started.elapsed().as_secs_f64();
    Ok(report)
}

// Aggregate NMSE of forward predictions over the validation columns, against
// the stored targets and (when present) the planted codes.
fn validation_nmse(
    model: &Model,
    y: &Matrix,
    x_target: &Matrix,
    x_planted: Option<&Matrix>,
    indices: &[usize],
) -> Result<(f64, f64)> {
    let mut pred = Matrix::zeros(x_target.rows(), indices.len());
    let mut target = Matrix::zeros(x_target.rows(), indices.len());
    let mut planted = x_planted.map(|_| Matrix::zeros(x_target.rows(), indices.len()));
    for (j, &idx) in indices.iter().enumerate() {
        pred.set_col(j, &model.forward(&y.col(idx))?)?;
        target.set_col(j, &x_target.col(idx))?;
        if let (Some(p), Some(src)) = (planted.as_mut(), x_planted) {
            p.set_col(j, &src.col(idx))?;
        }
    }
    let vs_target = nmse(&pred, &target)?;
    let vs_planted = match planted {
        Some(p) => nmse(&pred, &p)?,
        None => vs_target,
    };
    Ok((vs_target, vs_planted))
}
