//! Deterministic training loop, evaluation, ablation harness, and random
//! hyperparameter search.

mod ablate;
mod metrics;
mod optim;
mod search;

pub use ablate::{
    ablate, ablation_csv, default_matrix, parse_descriptor, AblationCell, AblationSpec, Granularity,
};
pub use metrics::{evaluate, metrics_from_predictions, predictions, ClassMetrics, Metrics};
pub use optim::{Optimizer, OptimizerKind};
pub use search::{hyper_search, SearchOutput, SearchSpace, Trial};

use serde::{Deserialize, Serialize};

use crate::cib::{batch_loss, LossWeights, NoisePlan, PairingMode, StreamSpec};
use crate::data::{shuffle, Dataset};
use crate::diff::Tape;
use crate::error::{Error, Result};
use crate::model::{McibModel, ModelConfig};
use crate::rng::derive_seed;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Monte-Carlo samples per posterior during training.
    pub mc_samples: usize,
    pub weights: LossWeights,
    pub streams: Vec<StreamSpec>,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub pairing: PairingMode,
    /// Early-stop patience on validation F1; 0 disables early stopping.
    pub patience: usize,
    pub model: ModelConfig,
}

impl TrainConfig {
    pub fn new(model: ModelConfig, streams: Vec<StreamSpec>) -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            epochs: 100,
            batch_size: 32,
            mc_samples: 4,
            weights: LossWeights::default(),
            streams,
            seed: 0,
            optimizer: OptimizerKind::Adam,
            pairing: PairingMode::Cross,
            patience: 10,
            model,
        }
    }

    /// Validates and canonicalizes: streams are ordered by primary modality,
    /// so the weight subscripts follow the modality numbering.
    pub fn validate(&mut self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::config("learning_rate must be non-negative"));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.mc_samples == 0 {
            return Err(Error::config(
                "epochs, batch_size, and mc_samples must be positive",
            ));
        }
        self.weights.validate()?;
        self.model.validate()?;
        if self.streams.is_empty() || self.streams.len() > 3 {
            return Err(Error::config(format!(
                "need between 1 and 3 streams, got {}",
                self.streams.len()
            )));
        }
        for s in &self.streams {
            s.validate()?;
        }
        self.streams.sort_by_key(|s| s.primary);
        let mut primaries: Vec<usize> = self.streams.iter().map(|s| s.primary).collect();
        primaries.dedup();
        if primaries.len() != self.streams.len() {
            return Err(Error::config(
                "each stream needs a distinct primary modality",
            ));
        }
        if self.streams.len() == 3 && primaries != [0, 1, 2] {
            return Err(Error::config(
                "a stream triple must cover each modality as primary exactly once",
            ));
        }
        // The objective weights are the source of truth for the per-stream
        // trade-off; keep the per-stream record in sync by stream index.
        for (i, s) in self.streams.iter_mut().enumerate() {
            s.lambda = self.weights.lambda[i];
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub total_loss: f64,
    pub val_f1: Option<f64>,
}

#[derive(Debug)]
pub struct TrainOutput {
    pub model: McibModel,
    pub history: Vec<EpochStats>,
}

/// Trains a model on `train_set`, optionally early-stopping on validation
/// weighted F1 (the best-scoring parameters are restored). Deterministic
/// under the config seed.
pub fn train(train_set: &Dataset, val: Option<&Dataset>, cfg: &TrainConfig) -> Result<TrainOutput> {
    let mut cfg = cfg.clone();
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::usage("cannot train on an empty dataset"));
    }
    train_set.validate()?;

    let mut model = McibModel::new(
        cfg.model.clone(),
        &cfg.streams,
        derive_seed(cfg.seed, "init", 0),
    )?;
    let mut optimizer = Optimizer::new(cfg.optimizer, cfg.learning_rate, &model.store);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, Vec<crate::diff::Tensor>, usize)> = None;

    let n = train_set.len();
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        shuffle(&mut order, cfg.seed, derive_seed(cfg.seed, "epoch", epoch as u64));

        let mut loss_sum = 0.0;
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&crate::data::ModalityBundle> =
                chunk.iter().map(|&i| &train_set.bundles[i]).collect();
            let noise = NoisePlan::generate(
                batch.len(),
                model.streams.len(),
                cfg.mc_samples,
                cfg.model.latent_dim,
                derive_seed(cfg.seed, "noise", (epoch * 1_000_003 + batch_idx) as u64),
            );
            let mut tape = Tape::new();
            let tp = model.store.bind(&mut tape);
            let loss = batch_loss(
                &mut tape,
                &model,
                &tp,
                &batch,
                &cfg.weights,
                cfg.pairing,
                &noise,
            )?;
            if !loss.total_value.is_finite() {
                return Err(diverged(&loss, epoch, batch_idx));
            }
            let grads_by_node = tape.backward(loss.total)?;
            let grads: Vec<crate::diff::Tensor> = tp
                .vars()
                .iter()
                .map(|&v| grads_by_node.wrt(&tape, v))
                .collect();
            optimizer.step(&mut model.store, &grads)?;
            loss_sum += loss.total_value * batch.len() as f64;
        }
        let total_loss = loss_sum / n as f64;

        let val_f1 = match val {
            Some(v) if !v.is_empty() => Some(evaluate(&model, v)?.weighted_f1),
            _ => None,
        };
        history.push(EpochStats {
            epoch,
            total_loss,
            val_f1,
        });

        if let (Some(f1), true) = (val_f1, cfg.patience > 0) {
            let improved = best.as_ref().is_none_or(|(b, _, _)| f1 > *b);
            if improved {
                best = Some((f1, model.store.tensors().to_vec(), epoch));
            } else if let Some((_, _, best_epoch)) = &best {
                if epoch - best_epoch >= cfg.patience {
                    break;
                }
            }
        }
    }

    if let Some((_, tensors, _)) = best {
        for (dst, src) in model.store.tensors_mut().iter_mut().zip(tensors) {
            *dst = src;
        }
    }
    Ok(TrainOutput { model, history })
}

fn diverged(loss: &crate::cib::BatchLoss, epoch: usize, batch: usize) -> Error {
    let context = format!(" at epoch {epoch}, batch {batch}");
    for (i, p) in loss.parts.iter().enumerate() {
        if !p.ib.is_finite() {
            return Error::Divergence {
                term: format!("stream {i} compression term"),
                context,
            };
        }
        if !p.cib.is_finite() {
            return Error::Divergence {
                term: format!("stream {i} retention term"),
                context,
            };
        }
    }
    if !loss.pred_loss_value.is_finite() {
        return Error::Divergence {
            term: "prediction loss".to_string(),
            context,
        };
    }
    Error::Divergence {
        term: "total loss".to_string(),
        context,
    }
}
