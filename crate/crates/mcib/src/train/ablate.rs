//! Modality and module ablation harness.
//!
//! Descriptors cover the ablation matrix: each single modality, every
//! ordered (primary, auxiliary) pair, the two stream triples that cover all
//! modalities, the MLP-vs-transformer encoder swap, and fine-vs-coarse token
//! granularity. A single-modality run degenerates to one plain-IB stream
//! with the prediction head on its latent alone; a pair run is exactly one
//! conditional bottleneck stream.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cib::{parse_stream_set, StreamSpec, MODALITY_LETTERS};
use crate::data::Dataset;
use crate::diff::math;
use crate::encoder::EncoderVariant;
use crate::error::{Error, Result};
use crate::rng::derive_seed;

use super::{evaluate, train, Metrics, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    /// Token sequences as provided.
    Fine,
    /// Tokens mean-pooled to a single vector per modality.
    Coarse,
}

#[derive(Clone, Debug, PartialEq)]
pub enum AblationSpec {
    Single(usize),
    Pair(usize, usize),
    Triple(Vec<(usize, Option<usize>)>),
    Encoder(EncoderVariant),
    Tokens(Granularity),
}

impl AblationSpec {
    pub fn label(&self) -> String {
        match self {
            AblationSpec::Single(m) => format!("single:{}", MODALITY_LETTERS[*m]),
            AblationSpec::Pair(p, a) => format!(
                "pair:{}{}",
                MODALITY_LETTERS[*p], MODALITY_LETTERS[*a]
            ),
            AblationSpec::Triple(streams) => {
                let parts: Vec<String> = streams
                    .iter()
                    .map(|(p, a)| match a {
                        Some(a) => format!("{}{}", MODALITY_LETTERS[*p], MODALITY_LETTERS[*a]),
                        None => MODALITY_LETTERS[*p].to_string(),
                    })
                    .collect();
                format!("triple:{}", parts.join("+"))
            }
            AblationSpec::Encoder(EncoderVariant::Mlp) => "encoder:mlp".to_string(),
            AblationSpec::Encoder(EncoderVariant::Transformer) => "encoder:transformer".to_string(),
            AblationSpec::Tokens(Granularity::Fine) => "granularity:fine".to_string(),
            AblationSpec::Tokens(Granularity::Coarse) => "granularity:coarse".to_string(),
        }
    }
}

/// Parses descriptors like "single:t", "pair:va", "triple:va+at+tv",
/// "encoder:mlp", "granularity:coarse".
pub fn parse_descriptor(s: &str) -> Result<AblationSpec> {
    let (kind, rest) = s
        .split_once(':')
        .ok_or_else(|| Error::usage(format!("bad ablation descriptor '{s}' (expected kind:value)")))?;
    match kind {
        "single" => {
            let set = parse_stream_set(rest)?;
            match set.as_slice() {
                [(p, None)] => Ok(AblationSpec::Single(*p)),
                _ => Err(Error::usage(format!(
                    "single descriptor needs one modality letter, got '{rest}'"
                ))),
            }
        }
        "pair" => {
            let set = parse_stream_set(rest)?;
            match set.as_slice() {
                [(p, Some(a))] => Ok(AblationSpec::Pair(*p, *a)),
                _ => Err(Error::usage(format!(
                    "pair descriptor needs two modality letters, got '{rest}'"
                ))),
            }
        }
        "triple" => {
            let set = parse_stream_set(rest)?;
            if set.len() != 3 {
                return Err(Error::usage(format!(
                    "triple descriptor needs three streams, got '{rest}'"
                )));
            }
            Ok(AblationSpec::Triple(set))
        }
        "encoder" => match rest {
            "mlp" => Ok(AblationSpec::Encoder(EncoderVariant::Mlp)),
            "transformer" => Ok(AblationSpec::Encoder(EncoderVariant::Transformer)),
            _ => Err(Error::usage(format!("unknown encoder variant '{rest}'"))),
        },
        "granularity" => match rest {
            "fine" => Ok(AblationSpec::Tokens(Granularity::Fine)),
            "coarse" => Ok(AblationSpec::Tokens(Granularity::Coarse)),
            _ => Err(Error::usage(format!("unknown granularity '{rest}'"))),
        },
        _ => Err(Error::usage(format!("unknown ablation kind '{kind}'"))),
    }
}

/// The full ablation matrix: 3 singles, 6 ordered pairs, both triples,
/// encoder variants, and token granularities.
pub fn default_matrix() -> Vec<AblationSpec> {
    let mut specs = Vec::new();
    for m in 0..3 {
        specs.push(AblationSpec::Single(m));
    }
    for p in 0..3 {
        for a in 0..3 {
            if p != a {
                specs.push(AblationSpec::Pair(p, a));
            }
        }
    }
    for triple in ["va+at+tv", "av+vt+ta"] {
        specs.push(AblationSpec::Triple(parse_stream_set(triple).unwrap()));
    }
    specs.push(AblationSpec::Encoder(EncoderVariant::Mlp));
    specs.push(AblationSpec::Encoder(EncoderVariant::Transformer));
    specs.push(AblationSpec::Tokens(Granularity::Fine));
    specs.push(AblationSpec::Tokens(Granularity::Coarse));
    specs
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AblationCell {
    pub config: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub seed_count: usize,
    pub per_seed: Vec<Metrics>,
}

/// Applies one descriptor to the base configuration (and data when the
/// descriptor changes granularity).
fn derive_run(
    base: &TrainConfig,
    spec: &AblationSpec,
) -> (TrainConfig, Option<Granularity>) {
    let mut cfg = base.clone();
    match spec {
        AblationSpec::Single(m) => {
            cfg.streams = vec![StreamSpec {
                primary: *m,
                auxiliary: None,
                lambda: base.weights.lambda[0],
            }];
        }
        AblationSpec::Pair(p, a) => {
            cfg.streams = vec![StreamSpec {
                primary: *p,
                auxiliary: Some(*a),
                lambda: base.weights.lambda[0],
            }];
        }
        AblationSpec::Triple(set) => {
            cfg.streams = set
                .iter()
                .enumerate()
                .map(|(i, (p, a))| StreamSpec {
                    primary: *p,
                    auxiliary: *a,
                    lambda: base.weights.lambda[i.min(2)],
                })
                .collect();
        }
        AblationSpec::Encoder(v) => {
            cfg.model.encoder_variant = *v;
        }
        AblationSpec::Tokens(g) => {
            return (cfg, Some(*g));
        }
    }
    (cfg, None)
}

/// Mean-pools every modality sequence to a single token.
fn coarsen(dataset: &Dataset) -> Dataset {
    let bundles = dataset
        .bundles
        .iter()
        .map(|b| crate::data::ModalityBundle {
            x: [
                math::mean_rows(&b.x[0]),
                math::mean_rows(&b.x[1]),
                math::mean_rows(&b.x[2]),
            ],
            y: b.y,
        })
        .collect();
    Dataset {
        ids: dataset.ids.clone(),
        bundles,
        n_classes: dataset.n_classes,
        dims: dataset.dims,
        tokens: 1,
    }
}

/// Runs every descriptor over the given seeds and reports per-seed metrics
/// and their means. The dataset is split once (stratified 70/10/20 on the
/// base seed) so all cells share the identical test set; cells are
/// embarrassingly parallel.
pub fn ablate(
    dataset: &Dataset,
    base: &TrainConfig,
    specs: &[AblationSpec],
    seeds: &[u64],
) -> Result<Vec<AblationCell>> {
    if specs.is_empty() || seeds.is_empty() {
        return Err(Error::usage("ablate needs at least one descriptor and one seed"));
    }
    let mut base = base.clone();
    base.validate()?;
    let (train_set, val_set, test_set) =
        crate::data::split_stratified(dataset, (0.7, 0.1, 0.2), base.seed)?;

    let cells: Result<Vec<AblationCell>> = specs
        .par_iter()
        .map(|spec| {
            let (cfg, granularity) = derive_run(&base, spec);
            let (tr, va, te) = match granularity {
                Some(Granularity::Coarse) => (
                    coarsen(&train_set),
                    coarsen(&val_set),
                    coarsen(&test_set),
                ),
                _ => (train_set.clone(), val_set.clone(), test_set.clone()),
            };
            let per_seed: Result<Vec<Metrics>> = seeds
                .par_iter()
                .map(|&seed| {
                    let mut run_cfg = cfg.clone();
                    run_cfg.seed = derive_seed(seed, "ablate", 0);
                    let out = train(&tr, Some(&va), &run_cfg)?;
                    evaluate(&out.model, &te)
                })
                .collect();
            let per_seed = per_seed?;
            let n = per_seed.len() as f64;
            let mean = |f: fn(&Metrics) -> f64| per_seed.iter().map(f).sum::<f64>() / n;
            Ok(AblationCell {
                config: spec.label(),
                precision: mean(|m| m.weighted_precision),
                recall: mean(|m| m.weighted_recall),
                f1: mean(|m| m.weighted_f1),
                accuracy: mean(|m| m.accuracy),
                seed_count: per_seed.len(),
                per_seed,
            })
        })
        .collect();
    cells
}

/// CSV table with the declared columns.
pub fn ablation_csv(cells: &[AblationCell]) -> String {
    let mut out = String::from("config,precision,recall,f1,seed_count\n");
    for c in cells {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            c.config, c.precision, c.recall, c.f1, c.seed_count
        ));
    }
    out
}
