use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{mix_seed, Encoded, Mode, Model};
use super::ModelError;
use crate::numerics::{adam_step, argmax, AdamConfig, OptimizerState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub max_epochs: usize,
    /// Epochs without validation-loss improvement before stopping.
    pub patience: usize,
    pub batch_size: usize,
    pub eval_batch_size: usize,
    pub adam: AdamConfig,
    /// Stop as soon as training accuracy reaches this value.
    pub target_train_accuracy: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 200,
            patience: 10,
            batch_size: 16,
            eval_batch_size: 64,
            adam: AdamConfig::default(),
            target_train_accuracy: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Eval-mode loss over the whole training split after the epoch.
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    EarlyStopping,
    TargetAccuracy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub history: Vec<EpochStats>,
    /// Epoch whose parameters were kept (1-based).
    pub best_epoch: usize,
    pub stop: StopReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
    pub predictions: Vec<usize>,
}

/// Eval-mode loss, accuracy and argmax predictions over `indices`.
pub fn evaluate(model: &Model, data: &Encoded, indices: &[usize], chunk: usize) -> Result<Evaluation, ModelError> {
    if indices.is_empty() {
        return Err(ModelError::Empty("evaluation split".into()));
    }
    let probs = model.predict_proba(data, indices, chunk)?;
    let labels = data.labels(indices);
    let mut loss = 0.0;
    let mut correct = 0;
    let mut predictions = Vec::with_capacity(indices.len());
    for (r, &y) in labels.iter().enumerate() {
        let row = probs.row(r);
        loss -= row[y].max(f64::MIN_POSITIVE).ln();
        let p = argmax(row);
        correct += usize::from(p == y);
        predictions.push(p);
    }
    let n = indices.len() as f64;
    Ok(Evaluation {
        loss: loss / n,
        accuracy: correct as f64 / n,
        predictions,
    })
}

/// Mini-batch Adam with early stopping on validation loss. On return
/// `model` and `optimizer` hold the kept epoch's state.
pub fn train(
    model: &mut Model,
    optimizer: &mut OptimizerState,
    data: &Encoded,
    train_idx: &[usize],
    val_idx: &[usize],
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome, ModelError> {
    if train_idx.is_empty() {
        return Err(ModelError::Empty("training split".into()));
    }
    if train_idx.iter().any(|i| val_idx.contains(i)) && config.target_train_accuracy.is_none() {
        log::warn!("training and validation splits overlap");
    }
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, Model, OptimizerState)> = None;
    let mut order = train_idx.to_vec();
    let mut stop = StopReason::MaxEpochs;

    for epoch in 1..=config.max_epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, epoch as u64]));
        order.shuffle(&mut rng);
        for (b, batch) in order.chunks(config.batch_size.max(1)).enumerate() {
            let mode = Mode::Train {
                seed: mix_seed(&[seed, epoch as u64, b as u64]),
            };
            let (loss, grads, trace) = model.loss_and_grads(data, batch, mode)?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(ModelError::NonFinite {
                    epoch,
                    batch: b,
                    detail: format!(
                        "loss {loss}; logits finite: {}; gradients finite: {}",
                        trace.logits.is_finite(),
                        grads.is_finite()
                    ),
                });
            }
            let g = grads.tensors();
            let mut params = model.params.tensors_mut();
            adam_step(&mut params, &g, optimizer, &config.adam)?;
        }

        let tr = evaluate(model, data, train_idx, config.eval_batch_size)?;
        let val = if val_idx.is_empty() {
            None
        } else {
            Some(evaluate(model, data, val_idx, config.eval_batch_size)?)
        };
        history.push(EpochStats {
            epoch,
            train_loss: tr.loss,
            train_accuracy: tr.accuracy,
            val_loss: val.as_ref().map(|v| v.loss),
            val_accuracy: val.as_ref().map(|v| v.accuracy),
        });
        log::debug!(
            "epoch {epoch}: train loss {:.4} acc {:.3}, val {:?}",
            tr.loss,
            tr.accuracy,
            val.as_ref().map(|v| (v.loss, v.accuracy))
        );

        if config.target_train_accuracy.is_some_and(|t| tr.accuracy >= t) {
            best = Some((0.0, epoch, model.clone(), optimizer.clone()));
            stop = StopReason::TargetAccuracy;
            break;
        }
        let monitored = val.as_ref().map_or(tr.loss, |v| v.loss);
        if best.as_ref().is_none_or(|(b, ..)| monitored < *b) {
            best = Some((monitored, epoch, model.clone(), optimizer.clone()));
        } else if epoch - best.as_ref().map_or(0, |b| b.1) >= config.patience {
            stop = StopReason::EarlyStopping;
            break;
        }
    }

    let best_epoch = match best {
        Some((_, epoch, m, o)) => {
            *model = m;
            *optimizer = o;
            epoch
        }
        None => 0,
    };
    Ok(TrainOutcome {
        history,
        best_epoch,
        stop,
    })
}
