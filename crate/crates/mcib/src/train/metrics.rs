//! Support-weighted one-vs-rest classification metrics.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::McibModel;
use crate::rng::derive_seed;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    pub n_samples: usize,
}

/// Per-class one-vs-rest precision/recall/F1, averaged with weights
/// proportional to true class support.
pub fn metrics_from_predictions(
    truth: &[usize],
    preds: &[usize],
    n_classes: usize,
) -> Result<Metrics> {
    if truth.is_empty() {
        return Err(Error::usage("metrics need at least one sample"));
    }
    if truth.len() != preds.len() {
        return Err(Error::usage(format!(
            "{} labels vs {} predictions",
            truth.len(),
            preds.len()
        )));
    }
    if let Some(&y) = truth.iter().chain(preds).find(|&&y| y >= n_classes) {
        return Err(Error::data(format!(
            "label {y} out of range for {n_classes} classes"
        )));
    }

    let n = truth.len();
    let mut tp = vec![0usize; n_classes];
    let mut fp = vec![0usize; n_classes];
    let mut fn_ = vec![0usize; n_classes];
    let mut support = vec![0usize; n_classes];
    let mut correct = 0usize;
    for (&t, &p) in truth.iter().zip(preds) {
        support[t] += 1;
        if t == p {
            tp[t] += 1;
            correct += 1;
        } else {
            fp[p] += 1;
            fn_[t] += 1;
        }
    }

    let mut per_class = Vec::with_capacity(n_classes);
    let (mut wp, mut wr, mut wf) = (0.0, 0.0, 0.0);
    for c in 0..n_classes {
        let precision = ratio(tp[c], tp[c] + fp[c]);
        let recall = ratio(tp[c], tp[c] + fn_[c]);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        let weight = support[c] as f64 / n as f64;
        wp += weight * precision;
        wr += weight * recall;
        wf += weight * f1;
        per_class.push(ClassMetrics {
            precision,
            recall,
            f1,
            support: support[c],
        });
    }

    Ok(Metrics {
        accuracy: correct as f64 / n as f64,
        weighted_precision: wp,
        weighted_recall: wr,
        weighted_f1: wf,
        per_class,
        n_samples: n,
    })
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Model predictions over a dataset, in dataset order.
pub fn predictions(model: &McibModel, dataset: &Dataset) -> Result<Vec<usize>> {
    if dataset.is_empty() {
        return Err(Error::usage("cannot evaluate on an empty dataset"));
    }
    dataset
        .bundles
        .iter()
        .zip(&dataset.ids)
        .map(|(bundle, &id)| {
            let p = if model.cfg.sample_at_eval {
                model.predict_sampled(bundle, derive_seed(0xE7A1, "eval_sample", id))?
            } else {
                model.predict(bundle)?
            };
            Ok(p.label)
        })
        .collect()
}

pub fn evaluate(model: &McibModel, dataset: &Dataset) -> Result<Metrics> {
    let preds = predictions(model, dataset)?;
    metrics_from_predictions(&dataset.labels(), &preds, dataset.n_classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_correct_is_all_ones() {
        let y = vec![0, 1, 2, 1];
        let m = metrics_from_predictions(&y, &y, 3).unwrap();
        assert_eq!(m.weighted_precision, 1.0);
        assert_eq!(m.weighted_recall, 1.0);
        assert_eq!(m.weighted_f1, 1.0);
        assert_eq!(m.accuracy, 1.0);
    }

    #[test]
    fn complement_predictions_on_balanced_binary_are_zero() {
        let truth = vec![0, 0, 1, 1];
        let preds = vec![1, 1, 0, 0];
        let m = metrics_from_predictions(&truth, &preds, 2).unwrap();
        assert_eq!(m.weighted_precision, 0.0);
        assert_eq!(m.weighted_recall, 0.0);
        assert_eq!(m.weighted_f1, 0.0);
    }

    #[test]
    fn hand_computed_support_weighted_example() {
        // truth [1,1,0,0], preds [1,0,0,0]:
        // class 0: tp=2 fp=1 fn=0 -> P=2/3, R=1, F1=0.8
        // class 1: tp=1 fp=0 fn=1 -> P=1, R=0.5, F1=2/3
        // supports equal -> weighted P = 5/6, R = 3/4, F1 = 11/15
        let m = metrics_from_predictions(&[1, 1, 0, 0], &[1, 0, 0, 0], 2).unwrap();
        assert!((m.weighted_precision - 5.0 / 6.0).abs() < 1e-12);
        assert!((m.weighted_recall - 0.75).abs() < 1e-12);
        assert!((m.weighted_f1 - 11.0 / 15.0).abs() < 1e-12);
        assert!((m.per_class[0].precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.per_class[1].f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn weighted_recall_equals_accuracy() {
        use rand::Rng;
        for seed in 0..20 {
            let mut rng = crate::rng::rng_from(seed);
            let truth: Vec<usize> = (0..60).map(|_| rng.gen_range(0..4)).collect();
            let preds: Vec<usize> = (0..60).map(|_| rng.gen_range(0..4)).collect();
            let m = metrics_from_predictions(&truth, &preds, 4).unwrap();
            assert!((m.weighted_recall - m.accuracy).abs() < 1e-12);
        }
    }

    #[test]
    fn order_invariance() {
        let truth = vec![0, 1, 1, 0, 1, 0];
        let preds = vec![0, 1, 0, 0, 1, 1];
        let m1 = metrics_from_predictions(&truth, &preds, 2).unwrap();
        let perm = [3, 1, 4, 0, 5, 2];
        let t2: Vec<usize> = perm.iter().map(|&i| truth[i]).collect();
        let p2: Vec<usize> = perm.iter().map(|&i| preds[i]).collect();
        let m2 = metrics_from_predictions(&t2, &p2, 2).unwrap();
        assert_eq!(m1, m2);
    }

    #[test]
    fn balanced_binary_weighted_equals_macro() {
        // With equal supports the weighted average is the plain mean.
        let truth = vec![0, 0, 0, 1, 1, 1];
        let preds = vec![0, 1, 0, 1, 0, 1];
        let m = metrics_from_predictions(&truth, &preds, 2).unwrap();
        let macro_f1 = (m.per_class[0].f1 + m.per_class[1].f1) / 2.0;
        assert!((m.weighted_f1 - macro_f1).abs() < 1e-12);
    }

    #[test]
    fn empty_input_is_usage_error() {
        assert!(matches!(
            metrics_from_predictions(&[], &[], 2).unwrap_err(),
            Error::Usage(_)
        ));
    }

    #[test]
    fn sampled_evaluation_is_seed_deterministic() {
        use crate::cib::StreamSpec;
        use crate::data::{synth_generate, SynthConfig};
        use crate::model::{McibModel, ModelConfig};
        let (ds, _) = synth_generate(&SynthConfig {
            n_samples: 10,
            dims: [8, 8, 8],
            signal_dims: 2,
            distractor_slots: 2,
            seed: 2,
            ..SynthConfig::default()
        })
        .unwrap();
        let mut cfg = ModelConfig::new([8, 8, 8], 2);
        cfg.latent_dim = 2;
        cfg.hidden_dim = 8;
        cfg.num_layers = 1;
        cfg.num_heads = 2;
        cfg.decoder_hidden = 8;
        cfg.encoder_variant = crate::encoder::EncoderVariant::Mlp;
        cfg.sample_at_eval = true;
        let specs = vec![
            StreamSpec::new(0, Some(2), 1.0).unwrap(),
            StreamSpec::new(1, Some(0), 1.0).unwrap(),
            StreamSpec::new(2, Some(1), 1.0).unwrap(),
        ];
        let model = McibModel::new(cfg, &specs, 8).unwrap();
        // The per-sample draw seed derives from the stable sample id.
        assert_eq!(
            predictions(&model, &ds).unwrap(),
            predictions(&model, &ds).unwrap()
        );
    }
}
