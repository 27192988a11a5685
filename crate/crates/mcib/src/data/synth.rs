//! Synthetic multimodal classification tasks with controllable redundancy
//! and complementarity, built so the Bayes-optimal accuracy of every
//! single-modality view and of the fused view is known at generation time.
//!
//! Construction (binary labels, sign-encoded as +-1):
//!
//! * a primary block of `signal_dims` dimensions in the designated primary
//!   modality carries the class sign with amplitude A*(1 - c - shared);
//! * each auxiliary modality carries a complementary block with amplitude
//!   A*c*(1-synergy)/sqrt(2) that the primary modality never sees;
//! * an optional synergy portion of the complementary mass is split between
//!   the two auxiliaries as a sign pair (s, y*s) with a hidden sign s, so it
//!   is invisible to every single modality and only recoverable jointly;
//! * a shared block repeats the class sign in all three modalities;
//! * redundancy adds label-independent distractor dimensions copied across
//!   all modalities with independent noise;
//! * everything is observed through Gaussian noise per token and dimension.
//!
//! Sufficient statistics are block means, so single-view accuracies have the
//! closed form Phi(deflection) and the fused view adds a log-cosh term for
//! the synergy pair, integrated numerically when present.

use serde::{Deserialize, Serialize};

use crate::diff::Tensor;
use crate::error::{Error, Result};
use crate::numeric::{gauss_legendre, normal_cdf};
use crate::rng::rng_for;

use super::{Dataset, ModalityBundle};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_samples: usize,
    pub dims: [usize; 3],
    pub tokens: usize,
    pub n_classes: usize,
    /// Fraction c of the signal visible only in the auxiliaries.
    pub complementarity: f64,
    /// Fraction r of the distractor slots filled with cross-modal
    /// label-independent copies.
    pub redundancy: f64,
    /// Fraction of the signal repeated in all modalities.
    pub shared_fraction: f64,
    /// Portion of the complementary mass that is only jointly visible.
    pub synergy_fraction: f64,
    pub noise_scale: f64,
    pub amplitude: f64,
    /// Dimensions per signal block.
    pub signal_dims: usize,
    /// Maximum distractor dimensions per modality.
    pub distractor_slots: usize,
    /// Modality carrying the primary signal block.
    pub primary_modality: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_samples: 1000,
            dims: [24, 24, 24],
            tokens: 1,
            n_classes: 2,
            complementarity: 0.0,
            redundancy: 0.0,
            shared_fraction: 0.0,
            synergy_fraction: 0.0,
            noise_scale: 1.0,
            amplitude: 1.0,
            signal_dims: 4,
            distractor_slots: 6,
            primary_modality: 0,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Amplitudes {
    primary: f64,
    plain: f64,
    synergy: f64,
    shared: f64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::config("n_samples must be positive"));
        }
        if self.n_classes != 2 {
            return Err(Error::config(
                "the generator's sign-flip construction is binary; n_classes must be 2",
            ));
        }
        if self.tokens == 0 || self.signal_dims == 0 {
            return Err(Error::config("tokens and signal_dims must be positive"));
        }
        if self.primary_modality > 2 {
            return Err(Error::config("primary_modality must be 0, 1, or 2"));
        }
        for knob in [
            ("complementarity", self.complementarity),
            ("redundancy", self.redundancy),
            ("shared_fraction", self.shared_fraction),
            ("synergy_fraction", self.synergy_fraction),
        ] {
            if !(0.0..=1.0).contains(&knob.1) || !knob.1.is_finite() {
                return Err(Error::config(format!(
                    "{} must lie in [0, 1], got {}",
                    knob.0, knob.1
                )));
            }
        }
        if self.complementarity + self.shared_fraction > 1.0 + 1e-12 {
            return Err(Error::config(format!(
                "infeasible combination: complementarity {} + shared_fraction {} exceeds 1",
                self.complementarity, self.shared_fraction
            )));
        }
        if !(self.noise_scale.is_finite() && self.noise_scale >= 0.0) {
            return Err(Error::config("noise_scale must be non-negative"));
        }
        if !(self.amplitude.is_finite() && self.amplitude > 0.0) {
            return Err(Error::config("amplitude must be positive"));
        }
        let needed = 3 * self.signal_dims + self.distractor_slots;
        for (m, &d) in self.dims.iter().enumerate() {
            if d < needed {
                return Err(Error::config(format!(
                    "infeasible (c, r) layout: modality {m} has dim {d}, needs at least {needed} \
                     (3 signal blocks of {} plus {} distractor slots)",
                    self.signal_dims, self.distractor_slots
                )));
            }
        }
        Ok(())
    }

    fn amplitudes(&self) -> Amplitudes {
        let a = self.amplitude;
        let c = self.complementarity;
        let sh = self.shared_fraction;
        let syn = self.synergy_fraction;
        Amplitudes {
            primary: a * (1.0 - c - sh).max(0.0),
            plain: a * c * (1.0 - syn) / std::f64::consts::SQRT_2,
            synergy: a * c * syn / std::f64::consts::SQRT_2,
            shared: a * sh,
        }
    }

    fn active_distractors(&self) -> usize {
        (self.redundancy * self.distractor_slots as f64).round() as usize
    }

    /// The two non-primary modalities, ascending.
    fn auxiliaries(&self) -> [usize; 2] {
        let mut out = [0; 2];
        let mut k = 0;
        for m in 0..3 {
            if m != self.primary_modality {
                out[k] = m;
                k += 1;
            }
        }
        out
    }
}

/// Bayes-optimal accuracies implied by the generator configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BayesAccuracies {
    pub per_modality: [f64; 3],
    pub fused: f64,
}

/// Deflection (mean shift of the normalized sufficient statistic) of one
/// antipodal block observed through `k * tokens` noisy dimensions.
fn deflection(amplitude: f64, k: usize, tokens: usize, noise: f64) -> f64 {
    amplitude * ((k * tokens) as f64).sqrt() / noise
}

fn bayes_accuracies(cfg: &SynthConfig) -> BayesAccuracies {
    let amps = cfg.amplitudes();
    let [aux1, aux2] = cfg.auxiliaries();
    let mut per_modality = [0.5; 3];

    if cfg.noise_scale == 0.0 {
        for m in 0..3 {
            let own = if m == cfg.primary_modality {
                amps.primary
            } else {
                amps.plain
            };
            per_modality[m] = if own > 0.0 || amps.shared > 0.0 { 1.0 } else { 0.5 };
        }
        let any = amps.primary > 0.0
            || amps.plain > 0.0
            || amps.shared > 0.0
            || amps.synergy > 0.0;
        return BayesAccuracies {
            per_modality,
            fused: if any { 1.0 } else { 0.5 },
        };
    }

    let defl = |a: f64| deflection(a, cfg.signal_dims, cfg.tokens, cfg.noise_scale);
    for m in 0..3 {
        let own = if m == cfg.primary_modality {
            amps.primary
        } else {
            amps.plain
        };
        let d2 = defl(own).powi(2) + defl(amps.shared).powi(2);
        per_modality[m] = normal_cdf(d2.sqrt());
    }
    let _ = (aux1, aux2);

    // Fused: all plain antipodal channels combine into one Gaussian channel;
    // the synergy pair adds a log-cosh likelihood-ratio term.
    let d_gauss = (defl(amps.primary).powi(2)
        + 2.0 * defl(amps.plain).powi(2)
        + 3.0 * defl(amps.shared).powi(2))
    .sqrt();
    let d_syn = defl(amps.synergy);
    let fused = if d_syn == 0.0 {
        normal_cdf(d_gauss)
    } else {
        fused_accuracy_with_synergy(d_gauss, d_syn)
    };
    BayesAccuracies {
        per_modality,
        fused,
    }
}

fn log_cosh(x: f64) -> f64 {
    let ax = x.abs();
    ax + (-2.0 * ax).exp().ln_1p() - std::f64::consts::LN_2
}

/// P(correct) of the optimal fused rule when a synergy pair is present:
/// a three-dimensional Gaussian expectation of the sign of the total
/// log-likelihood ratio, evaluated by tensor-product quadrature.
fn fused_accuracy_with_synergy(d_gauss: f64, d_syn: f64) -> f64 {
    let (nodes, weights) = gauss_legendre(48);
    let half = 8.0; // integrate standard normals over [-8, 8]
    let phi = |g: f64| (-0.5 * g * g).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut acc = 0.0;
    for (&x0, &w0) in nodes.iter().zip(&weights) {
        let g0 = x0 * half;
        let llr_gauss = 2.0 * d_gauss * (d_gauss + g0);
        let w_g0 = w0 * half * phi(g0);
        for (&x1, &w1) in nodes.iter().zip(&weights) {
            let g1 = x1 * half;
            let w_g1 = w1 * half * phi(g1);
            for (&x2, &w2) in nodes.iter().zip(&weights) {
                let g2 = x2 * half;
                let m_sum = d_syn * (2.0 * d_syn + g1 + g2);
                let m_diff = d_syn * (g1 - g2);
                let llr = llr_gauss + log_cosh(m_sum) - log_cosh(m_diff);
                if llr > 0.0 {
                    acc += w_g0 * w_g1 * w2 * half * phi(g2);
                }
            }
        }
    }
    acc
}

/// Generates the dataset and its Bayes-optimal accuracies. Labels are drawn
/// uniformly; generation is bitwise deterministic in the seed.
pub fn synth_generate(cfg: &SynthConfig) -> Result<(Dataset, BayesAccuracies)> {
    cfg.validate()?;
    use rand::Rng;

    let amps = cfg.amplitudes();
    let [aux1, aux2] = cfg.auxiliaries();
    let k = cfg.signal_dims;
    let k_r = cfg.active_distractors();
    let mut bundles = Vec::with_capacity(cfg.n_samples);

    for i in 0..cfg.n_samples {
        let mut rng = rng_for(cfg.seed, "synth", i as u64);
        let y = rng.gen_range(0..2usize);
        let sign_y = if y == 1 { 1.0 } else { -1.0 };
        let s: f64 = if rng.gen_range(0..2) == 1 { 1.0 } else { -1.0 };
        let distractors: Vec<f64> = (0..k_r)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();

        let mut x: Vec<Tensor> = Vec::with_capacity(3);
        for m in 0..3 {
            let dim = cfg.dims[m];
            let mut mean = vec![0.0; dim];
            let own = if m == cfg.primary_modality {
                amps.primary
            } else {
                amps.plain
            };
            for j in 0..k {
                mean[j] = sign_y * own;
            }
            if m == aux1 {
                for j in 0..k {
                    mean[k + j] = s * amps.synergy;
                }
            } else if m == aux2 {
                for j in 0..k {
                    mean[k + j] = sign_y * s * amps.synergy;
                }
            }
            for j in 0..k {
                mean[2 * k + j] = sign_y * amps.shared;
            }
            for (j, &u) in distractors.iter().enumerate() {
                mean[3 * k + j] = u;
            }

            let t = Tensor::from_fn(cfg.tokens, dim, |_, c| {
                let g: f64 = rng.sample(rand_distr::StandardNormal);
                mean[c] + cfg.noise_scale * g
            });
            x.push(t);
        }
        let x: [Tensor; 3] = x.try_into().expect("three modalities");
        bundles.push(ModalityBundle { x, y });
    }

    let dataset = Dataset {
        ids: (0..cfg.n_samples as u64).collect(),
        bundles,
        n_classes: 2,
        dims: cfg.dims,
        tokens: cfg.tokens,
    };
    Ok((dataset, bayes_accuracies(cfg)))
}
