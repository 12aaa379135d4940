//! Adam and the mini-batch training loop with validation early stopping.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{batch_indices, Dataset, Instance};
use crate::error::{Error, Result};
use crate::metrics::auc;
use crate::model::{logloss, Model, ModelParams, ModelSpec, DEFAULT_LAMBDA};
use crate::numerics::Rng;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(len: usize, lr: f64) -> Self {
        AdamState {
            lr,
            beta1: BETA1,
            beta2: BETA2,
            eps: ADAM_EPS,
            t: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::dim(format!(
            "adam over {} parameters, {} gradients, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    /// Capped at the training set size.
    pub batch_size: usize,
    pub max_epochs: usize,
    pub lambda: f64,
    pub patience: usize,
    pub seed: u64,
    pub init_std: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.001,
            batch_size: 4096,
            max_epochs: 20,
            lambda: DEFAULT_LAMBDA,
            patience: 2,
            seed: 42,
            init_std: crate::components::INIT_STD,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::Config(format!(
                "lambda must be non-negative, got {}",
                self.lambda
            )));
        }
        if !(self.init_std >= 0.0) {
            return Err(Error::Config("init_std must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: Option<f64>,
    /// Absent when the validation set is empty or single-class.
    pub valid_auc: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch (1-based) whose parameters were returned; 0 for none.
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.epochs {
            out.push_str(&serde_json::to_string(e).expect("epoch record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_jsonl().as_bytes())
            .map_err(|e| Error::io(path, e))
    }
}

/// Validation loss and AUC; `None` for the parts that are undefined.
fn validate_model(model: &Model, valid: &Dataset) -> Result<(Option<f64>, Option<f64>)> {
    if valid.is_empty() {
        return Ok((None, None));
    }
    let preds = model.predict_all(&valid.instances)?;
    let labels = valid.labels();
    let loss = logloss(&preds, &labels)?;
    let pos = valid.positives();
    let a = if pos == 0 || pos == labels.len() {
        None
    } else {
        Some(auc(&preds, &labels)?)
    };
    Ok((Some(loss), a))
}

/// Trains `spec` from a seeded initialization and returns the parameters of
/// the epoch with the best validation AUC (the last epoch when AUC is
/// unavailable).
pub fn train(
    spec: &ModelSpec,
    train_set: &Dataset,
    valid: &Dataset,
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainHistory)> {
    cfg.validate()?;
    spec.validate()?;
    if train_set.is_empty() {
        return Err(Error::Argument("training set is empty".into()));
    }
    if train_set.schema.num_fields() != spec.num_fields
        || train_set.schema.num_features() > spec.num_features
    {
        return Err(Error::dim(format!(
            "dataset has {} fields / {} features, model expects {} / {}",
            train_set.schema.num_fields(),
            train_set.schema.num_features(),
            spec.num_fields,
            spec.num_features
        )));
    }
    let mut rng = Rng::new(cfg.seed);
    let mut model = Model {
        spec: spec.clone(),
        params: ModelParams::init(spec, cfg.init_std, &mut rng)?,
    };
    let mut history = TrainHistory::default();
    if cfg.max_epochs == 0 {
        return Ok((model.params, history));
    }

    let n = train_set.len();
    let batch_size = cfg.batch_size.min(n);
    let mut adam = AdamState::new(model.params.num_parameters(), cfg.lr);
    let mut best: Option<(f64, ModelParams)> = None;
    let mut stale = 0;

    for epoch in 1..=cfg.max_epochs {
        let start = Instant::now();
        let mut loss_sum = 0.0;
        for (b, idx) in batch_indices(n, batch_size, Some(&mut rng))?.into_iter().enumerate() {
            let batch: Vec<&Instance> = idx.iter().map(|&i| &train_set.instances[i]).collect();
            let reg = cfg.lambda * batch.len() as f64 / n as f64;
            let (loss, grad) = model.loss_and_dense_gradient(&batch, reg)?;
            if !loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    batch: b,
                    message: format!("non-finite batch loss {loss}"),
                });
            }
            loss_sum += loss * batch.len() as f64;
            let mut flat = model.params.to_flat();
            adam_step(&mut flat, &grad.to_flat(), &mut adam)?;
            if flat.iter().any(|v| !v.is_finite()) {
                return Err(Error::Training {
                    epoch,
                    batch: b,
                    message: "non-finite parameter after update".into(),
                });
            }
            model.params.set_flat(&flat)?;
        }
        let (valid_loss, valid_auc) = validate_model(&model, valid)?;
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / n as f64,
            valid_loss,
            valid_auc,
            seconds: start.elapsed().as_secs_f64(),
        });

        match valid_auc {
            Some(a) if best.as_ref().is_none_or(|(b, _)| a > *b) => {
                best = Some((a, model.params.clone()));
                history.best_epoch = epoch;
                stale = 0;
            }
            Some(_) => {
                stale += 1;
                if stale >= cfg.patience.max(1) {
                    break;
                }
            }
            None => {}
        }
    }
    match best {
        Some((_, params)) => Ok((params, history)),
        None => {
            history.best_epoch = history.epochs.len();
            Ok((model.params, history))
        }
    }
}
