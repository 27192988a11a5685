//! Random hyperparameter search: uniform integer draws for the trade-off
//! weights and hidden sizes, scored by validation weighted F1.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::rng_for;

use super::{evaluate, train, TrainConfig};

/// Inclusive integer bounds per hyperparameter group.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub lambda: (u64, u64),
    pub alpha: (u64, u64),
    pub hidden: (u64, u64),
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            lambda: (1, 64),
            alpha: (1, 64),
            hidden: (1, 64),
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("lambda", self.lambda),
            ("alpha", self.alpha),
            ("hidden", self.hidden),
        ] {
            if lo == 0 || hi < lo {
                return Err(Error::usage(format!(
                    "search space {name} bounds [{lo}, {hi}] are invalid"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub lambda: [f64; 3],
    pub alpha: [f64; 3],
    pub hidden: usize,
    pub val_f1: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SearchOutput {
    pub best_index: usize,
    pub best_config: TrainConfig,
    pub trials: Vec<Trial>,
}

/// Draws `trials` random configurations, trains each, and returns the one
/// with the best validation weighted F1 plus the full trace. Draws are
/// seed-deterministic and trials run in parallel with derived seeds.
pub fn hyper_search(
    train_set: &Dataset,
    val_set: &Dataset,
    base: &TrainConfig,
    space: &SearchSpace,
    trials: usize,
    seed: u64,
) -> Result<SearchOutput> {
    if trials == 0 {
        return Err(Error::usage("hyper_search needs trials >= 1"));
    }
    space.validate()?;
    if val_set.is_empty() {
        return Err(Error::usage("hyper_search needs a non-empty validation set"));
    }
    let mut base = base.clone();
    base.validate()?;

    // Draw all configurations up front so the sequence depends only on the seed.
    let draws: Vec<([f64; 3], [f64; 3], usize)> = (0..trials)
        .map(|t| {
            let mut rng = rng_for(seed, "search", t as u64);
            let mut draw3 = |(lo, hi): (u64, u64)| {
                [
                    rng.gen_range(lo..=hi) as f64,
                    rng.gen_range(lo..=hi) as f64,
                    rng.gen_range(lo..=hi) as f64,
                ]
            };
            let lambda = draw3(space.lambda);
            let alpha = draw3(space.alpha);
            let hidden = rng.gen_range(space.hidden.0..=space.hidden.1) as usize;
            (lambda, alpha, hidden)
        })
        .collect();

    let results: Result<Vec<Trial>> = draws
        .par_iter()
        .enumerate()
        .map(|(t, (lambda, alpha, hidden))| {
            let mut cfg = base.clone();
            cfg.weights.lambda = *lambda;
            cfg.weights.alpha = *alpha;
            for (i, s) in cfg.streams.iter_mut().enumerate() {
                s.lambda = lambda[i.min(2)];
            }
            // Keep attention head divisibility when the draw lands on an
            // awkward width.
            let heads = cfg.model.num_heads.max(1);
            cfg.model.hidden_dim = (*hidden).max(heads).div_ceil(heads) * heads;
            cfg.model.decoder_hidden = cfg.model.hidden_dim;
            cfg.seed = crate::rng::derive_seed(seed, "trial", t as u64);
            let out = train(train_set, Some(val_set), &cfg)?;
            let val_f1 = evaluate(&out.model, val_set)?.weighted_f1;
            Ok(Trial {
                index: t,
                lambda: *lambda,
                alpha: *alpha,
                hidden: *hidden,
                val_f1,
            })
        })
        .collect();
    let trials_out = results?;

    let best_index = trials_out
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| {
            a.val_f1
                .partial_cmp(&b.val_f1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(ib.cmp(ia)) // ties: earliest trial wins
        })
        .map(|(i, _)| i)
        .expect("trials >= 1");

    let best = &trials_out[best_index];
    let mut best_config = base.clone();
    best_config.weights.lambda = best.lambda;
    best_config.weights.alpha = best.alpha;
    for (i, s) in best_config.streams.iter_mut().enumerate() {
        s.lambda = best.lambda[i.min(2)];
    }
    let heads = best_config.model.num_heads.max(1);
    best_config.model.hidden_dim = best.hidden.max(heads).div_ceil(heads) * heads;
    best_config.model.decoder_hidden = best_config.model.hidden_dim;
    best_config.seed = crate::rng::derive_seed(seed, "trial", best.index as u64);

    Ok(SearchOutput {
        best_index,
        best_config,
        trials: trials_out,
    })
}
