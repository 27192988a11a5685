//! Conditional-information-bottleneck loss machinery.
//!
//! Each stream compresses a primary modality into a Gaussian latent state
//! (KL term against the standard-normal prior) while a conditional
//! likelihood term retains information about the label that the auxiliary
//! modality does not already carry. Three streams are assembled with a
//! cross-indexed pairing and combined with a fused prediction loss.

use serde::{Deserialize, Serialize};

use crate::data::ModalityBundle;
use crate::diff::{Tape, Tensor, Var};
use crate::encoder::{GaussianPosterior, LatentSample};
use crate::error::{Error, Result};
use crate::model::{Decoder, McibModel};
use crate::params::{AffineParams, ParamStore, TapeParams};
use crate::rng::rng_for;

/// Modality letters as used in stream notation: a = audio (0), v = video (1),
/// t = text (2).
pub const MODALITY_LETTERS: [char; 3] = ['a', 'v', 't'];

pub fn modality_index(letter: char) -> Result<usize> {
    MODALITY_LETTERS
        .iter()
        .position(|&c| c == letter)
        .ok_or_else(|| Error::config(format!("unknown modality letter '{letter}' (use a, v, t)")))
}

/// One bottleneck stream: which modality is compressed (`primary`) and which
/// one the retention term conditions on (`auxiliary`). `auxiliary = None`
/// degenerates to a plain information bottleneck, used by single-modality
/// ablations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamSpec {
    pub primary: usize,
    pub auxiliary: Option<usize>,
    pub lambda: f64,
}

impl StreamSpec {
    pub fn new(primary: usize, auxiliary: Option<usize>, lambda: f64) -> Result<Self> {
        let spec = StreamSpec {
            primary,
            auxiliary,
            lambda,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.primary > 2 {
            return Err(Error::config(format!(
                "primary modality index {} out of range",
                self.primary
            )));
        }
        if let Some(a) = self.auxiliary {
            if a > 2 {
                return Err(Error::config(format!(
                    "auxiliary modality index {a} out of range"
                )));
            }
            if a == self.primary {
                return Err(Error::config(format!(
                    "stream primary and auxiliary must differ, both are {a}"
                )));
            }
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::config(format!(
                "lambda must be non-negative, got {}",
                self.lambda
            )));
        }
        Ok(())
    }

    /// Notation like "va" (primary v, auxiliary a) or "v" for a plain stream.
    pub fn label(&self) -> String {
        match self.auxiliary {
            Some(a) => format!(
                "{}{}",
                MODALITY_LETTERS[self.primary], MODALITY_LETTERS[a]
            ),
            None => MODALITY_LETTERS[self.primary].to_string(),
        }
    }
}

/// Parses stream notation like "va+at+tv" into (primary, auxiliary) pairs,
/// or single letters like "t" into plain-IB streams.
pub fn parse_stream_set(s: &str) -> Result<Vec<(usize, Option<usize>)>> {
    let mut out = Vec::new();
    for part in s.split('+') {
        let part = part.trim();
        let chars: Vec<char> = part.chars().collect();
        match chars.len() {
            1 => out.push((modality_index(chars[0])?, None)),
            2 => {
                let p = modality_index(chars[0])?;
                let a = modality_index(chars[1])?;
                if p == a {
                    return Err(Error::config(format!(
                        "stream '{part}': primary and auxiliary must differ"
                    )));
                }
                out.push((p, Some(a)));
            }
            _ => {
                return Err(Error::config(format!(
                    "stream '{part}' must be one or two of a, v, t"
                )))
            }
        }
    }
    if out.is_empty() || out.len() > 3 {
        return Err(Error::config(format!(
            "need between 1 and 3 streams, got {}",
            out.len()
        )));
    }
    Ok(out)
}

/// Trade-off and mixing weights of the assembled objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda: [f64; 3],
    pub alpha: [f64; 3],
    pub beta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda: [4.0, 4.0, 4.0],
            alpha: [1.0, 1.0, 1.0],
            beta: 4.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = self
            .lambda
            .iter()
            .chain(self.alpha.iter())
            .chain(std::iter::once(&self.beta));
        for v in all {
            if !(v.is_finite() && *v >= 0.0) {
                return Err(Error::config(format!(
                    "loss weights must be finite and non-negative, got {v}"
                )));
            }
        }
        if self.alpha.iter().all(|&a| a == 0.0) && self.beta == 0.0 {
            return Err(Error::config(
                "at least one of alpha0..2 or beta must be positive, otherwise the objective is identically zero",
            ));
        }
        Ok(())
    }
}

/// Which stream's retention term each stream's compression term is paired
/// with. `Cross` pairs stream i with the retention of stream (i+2) mod 3;
/// `Aligned` pairs each stream with its own retention term and is provided
/// for the ablation harness only.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairingMode {
    Cross,
    Aligned,
}

/// The two components of one stream's loss: `ib` is the KL compression term,
/// `cib` the negative expected conditional log-likelihood (retention term).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamLossParts {
    pub ib: f64,
    pub cib: f64,
}

impl StreamLossParts {
    /// KL - lambda * (mean conditional log-likelihood) = ib + lambda * cib.
    pub fn combined(&self, lambda: f64) -> f64 {
        self.ib + lambda * self.cib
    }
}

/// Closed-form KL divergence from a diagonal Gaussian to the standard normal:
/// half the sum over dimensions of sigma^2 + mu^2 - 1 - log sigma^2.
pub fn kl_to_standard_normal(posterior: &GaussianPosterior) -> f64 {
    posterior
        .mu()
        .iter()
        .zip(posterior.sigma())
        .map(|(&m, &s)| {
            let var = s * s;
            0.5 * (var + m * m - 1.0 - var.ln())
        })
        .sum()
}

/// Same KL, as a tape node from (mu, log-variance) rows.
pub fn kl_node(tape: &mut Tape, mu: Var, logvar: Var) -> Result<Var> {
    let var_ = tape.exp(logvar);
    let musq = tape.mul(mu, mu)?;
    let sum = tape.add(var_, musq)?;
    let shifted = tape.add_scalar(sum, -1.0);
    let inner = tape.sub(shifted, logvar)?;
    let total = tape.sum_all(inner);
    Ok(tape.scale(total, 0.5))
}

/// Monte-Carlo estimate of the conditional log-likelihood: the mean over
/// latent samples of log q(y | b, x_a) under the decoder.
pub fn conditional_log_likelihood(
    samples: &[LatentSample],
    x_aux: Option<&Tensor>,
    label: usize,
    decoder: &Decoder,
    store: &ParamStore,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::usage("conditional_log_likelihood needs L >= 1 samples"));
    }
    if label >= decoder.n_classes() {
        return Err(Error::data(format!(
            "label {label} out of range for {} classes",
            decoder.n_classes()
        )));
    }
    let mut total = 0.0;
    for s in samples {
        let mut tape = Tape::new();
        let tp = store.bind_const(&mut tape);
        let b = tape.constant(Tensor::row(s.values.clone()));
        let aux = x_aux.map(|t| tape.constant(t.clone()));
        let logits = decoder.forward(&mut tape, &tp, b, aux)?;
        let logp = tape.log_softmax(logits);
        total += tape.value(logp).get(0, label);
    }
    Ok(total / samples.len() as f64)
}

/// Per-stream loss parts over a batch: `ib` is the batch-mean KL of the
/// primary encoder, `cib` the batch-mean negative conditional log-likelihood.
pub fn stream_loss(
    model: &McibModel,
    stream_index: usize,
    batch: &[&ModalityBundle],
    l_samples: usize,
    seed: u64,
) -> Result<StreamLossParts> {
    if batch.is_empty() {
        return Err(Error::usage("stream_loss needs a non-empty batch"));
    }
    let stream = &model.streams[stream_index];
    let mut ib = 0.0;
    let mut cib = 0.0;
    for (i, bundle) in batch.iter().enumerate() {
        let posterior = stream
            .encoder
            .encode_posterior(&model.store, &bundle.x[stream.spec.primary])?;
        ib += kl_to_standard_normal(&posterior);
        let samples = crate::encoder::reparameterize(
            &posterior,
            l_samples,
            crate::rng::derive_seed(seed, "stream_loss", (stream_index * batch.len() + i) as u64),
        )?;
        let aux = stream.spec.auxiliary.map(|a| &bundle.x[a]);
        cib -= conditional_log_likelihood(&samples, aux, bundle.y, &stream.decoder, &model.store)?;
    }
    let n = batch.len() as f64;
    Ok(StreamLossParts {
        ib: ib / n,
        cib: cib / n,
    })
}

/// Assembles per-stream losses. With three streams and `Cross` pairing,
/// stream i's compression term is paired with stream (i+2 mod 3)'s retention
/// term; otherwise each stream keeps its own retention term.
pub fn assemble_stream_losses(
    parts: &[StreamLossParts],
    weights: &LossWeights,
    pairing: PairingMode,
) -> Vec<f64> {
    (0..parts.len())
        .map(|i| {
            let cib_index = cib_partner(i, parts.len(), pairing);
            parts[i].ib + weights.lambda[i] * parts[cib_index].cib
        })
        .collect()
}

pub(crate) fn cib_partner(i: usize, n_streams: usize, pairing: PairingMode) -> usize {
    match pairing {
        PairingMode::Cross if n_streams == 3 => (i + 2) % 3,
        _ => i,
    }
}

/// Class probabilities from the affine fusion head over concatenated latents.
pub fn fuse_and_predict(
    latents: &[&[f64]],
    head: &AffineParams,
    store: &ParamStore,
) -> Result<Vec<f64>> {
    let concat: Vec<f64> = latents.iter().flat_map(|l| l.iter().copied()).collect();
    let expected = store.get(head.w).rows();
    if concat.len() != expected {
        return Err(Error::config(format!(
            "fusion head expects total latent dim {expected}, got {}",
            concat.len()
        )));
    }
    let logits = head.eval(store, &Tensor::row(concat))?;
    Ok(crate::diff::math::softmax(&logits).data().to_vec())
}

/// Weighted sum of the assembled stream losses and the prediction loss.
/// Any non-finite input is reported as a divergence naming the term.
pub fn total_loss(stream_losses: &[f64], pred_loss: f64, weights: &LossWeights) -> Result<f64> {
    for (i, l) in stream_losses.iter().enumerate() {
        if !l.is_finite() {
            return Err(Error::Divergence {
                term: format!("stream loss {i}"),
                context: String::new(),
            });
        }
    }
    if !pred_loss.is_finite() {
        return Err(Error::Divergence {
            term: "prediction loss".to_string(),
            context: String::new(),
        });
    }
    let total = stream_losses
        .iter()
        .enumerate()
        .map(|(i, l)| weights.alpha[i] * l)
        .sum::<f64>()
        + weights.beta * pred_loss;
    Ok(total)
}

/// Frozen standard-normal draws for the reparameterization trick:
/// one 1 x d row per (sample, stream, monte-carlo draw).
pub struct NoisePlan {
    eps: Vec<Vec<Vec<Tensor>>>,
}

impl NoisePlan {
    pub fn generate(
        n_samples: usize,
        n_streams: usize,
        l_samples: usize,
        latent_dim: usize,
        seed: u64,
    ) -> Self {
        let eps = (0..n_samples)
            .map(|i| {
                (0..n_streams)
                    .map(|s| {
                        let mut rng = rng_for(seed, "noise", (i * n_streams + s) as u64);
                        (0..l_samples)
                            .map(|_| Tensor::randn(1, latent_dim, 1.0, &mut rng))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        NoisePlan { eps }
    }

    pub fn get(&self, sample: usize, stream: usize, draw: usize) -> &Tensor {
        &self.eps[sample][stream][draw]
    }

    pub fn samples(&self) -> usize {
        self.eps.len()
    }

    pub fn streams(&self) -> usize {
        self.eps.first().map_or(0, Vec::len)
    }

    pub fn l_samples(&self) -> usize {
        self.eps[0][0].len()
    }
}

/// Everything the trainer needs from one recorded batch loss.
pub struct BatchLoss {
    pub total: Var,
    pub total_value: f64,
    pub stream_loss_values: Vec<f64>,
    pub parts: Vec<StreamLossParts>,
    pub pred_loss_value: f64,
}

/// Records the full objective for a batch on the tape:
/// per-stream KL and retention terms, cross-indexed assembly, and the
/// cross-entropy of the fused prediction from the posterior means.
pub fn batch_loss(
    tape: &mut Tape,
    model: &McibModel,
    tp: &TapeParams,
    batch: &[&ModalityBundle],
    weights: &LossWeights,
    pairing: PairingMode,
    noise: &NoisePlan,
) -> Result<BatchLoss> {
    if batch.is_empty() {
        return Err(Error::usage("batch_loss needs a non-empty batch"));
    }
    weights.validate()?;
    let n_streams = model.streams.len();
    if noise.samples() < batch.len() || noise.streams() < n_streams {
        return Err(Error::usage(format!(
            "noise plan covers {} samples x {} streams, batch needs {} x {n_streams}",
            noise.samples(),
            noise.streams(),
            batch.len()
        )));
    }
    let l_samples = noise.l_samples();
    let inv_n = 1.0 / batch.len() as f64;

    let mut kl_acc: Vec<Option<Var>> = vec![None; n_streams];
    let mut nll_acc: Vec<Option<Var>> = vec![None; n_streams];
    let mut pred_acc: Option<Var> = None;

    for (i, bundle) in batch.iter().enumerate() {
        if bundle.y >= model.cfg.n_classes {
            return Err(Error::data(format!(
                "label {} out of range for {} classes (batch row {i})",
                bundle.y, model.cfg.n_classes
            )));
        }
        let mut mus = Vec::with_capacity(n_streams);
        for (s, stream) in model.streams.iter().enumerate() {
            let x_p = tape.constant(bundle.x[stream.spec.primary].clone());
            let (mu, logvar) = stream.encoder.forward(tape, tp, x_p)?;
            let kl = kl_node(tape, mu, logvar)?;
            kl_acc[s] = Some(accumulate(tape, kl_acc[s], kl)?);

            // Monte-Carlo retention term.
            let half_lv = tape.scale(logvar, 0.5);
            let sigma = tape.exp(half_lv);
            let aux = stream
                .spec
                .auxiliary
                .map(|a| tape.constant(bundle.x[a].clone()));
            let mut nll_sum: Option<Var> = None;
            for l in 0..l_samples {
                let eps = tape.constant(noise.get(i, s, l).clone());
                let scaled = tape.mul(sigma, eps)?;
                let b = tape.add(mu, scaled)?;
                let logits = stream.decoder.forward(tape, tp, b, aux)?;
                let logp = tape.log_softmax(logits);
                let nll = tape.nll_mean(logp, &[bundle.y])?;
                nll_sum = Some(accumulate(tape, nll_sum, nll)?);
            }
            let mean_nll = tape.scale(nll_sum.expect("l_samples >= 1"), 1.0 / l_samples as f64);
            nll_acc[s] = Some(accumulate(tape, nll_acc[s], mean_nll)?);
            mus.push(mu);
        }

        // Fused prediction from posterior means.
        let fused = tape.concat_cols(&mus)?;
        let logits = tape.affine(fused, tp.var(model.head.w), tp.var(model.head.b))?;
        let logp = tape.log_softmax(logits);
        let nll = tape.nll_mean(logp, &[bundle.y])?;
        pred_acc = Some(accumulate(tape, pred_acc, nll)?);
    }

    let mut parts = Vec::with_capacity(n_streams);
    let mut stream_vars = Vec::with_capacity(n_streams);
    for s in 0..n_streams {
        let ib = tape.scale(kl_acc[s].expect("accumulated"), inv_n);
        let cib = tape.scale(nll_acc[s].expect("accumulated"), inv_n);
        parts.push(StreamLossParts {
            ib: tape.value(ib).item()?,
            cib: tape.value(cib).item()?,
        });
        stream_vars.push((ib, cib));
    }

    let pred_loss = tape.scale(pred_acc.expect("non-empty batch"), inv_n);
    let pred_loss_value = tape.value(pred_loss).item()?;

    // Assemble: stream i's IB with its pairing partner's CIB, then the
    // weighted total.
    let mut total: Option<Var> = None;
    let mut stream_loss_values = Vec::with_capacity(n_streams);
    for i in 0..n_streams {
        let partner = cib_partner(i, n_streams, pairing);
        let scaled_cib = tape.scale(stream_vars[partner].1, weights.lambda[i]);
        let li = tape.add(stream_vars[i].0, scaled_cib)?;
        stream_loss_values.push(tape.value(li).item()?);
        let weighted = tape.scale(li, weights.alpha[i]);
        total = Some(accumulate(tape, total, weighted)?);
    }
    let weighted_pred = tape.scale(pred_loss, weights.beta);
    let total = accumulate(tape, total, weighted_pred)?;
    let total_value = tape.value(total).item()?;

    Ok(BatchLoss {
        total,
        total_value,
        stream_loss_values,
        parts,
        pred_loss_value,
    })
}

fn accumulate(tape: &mut Tape, acc: Option<Var>, v: Var) -> Result<Var> {
    match acc {
        Some(a) => tape.add(a, v),
        None => Ok(v),
    }
}
