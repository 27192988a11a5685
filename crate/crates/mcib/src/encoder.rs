//! Modality encoders: map a token sequence to the Gaussian variational
//! posterior over the latent state, and draw reparameterized samples.
//!
//! Two variants are provided: a transformer encoder (the default) and a
//! plain MLP used by the architecture ablation. Tokens are mean-pooled
//! before the mean / log-variance heads. Sigma is parameterized as
//! exp(half the log-variance), with the log-variance clamped to [-10, 10]
//! to keep the posterior away from collapse and overflow.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::params::{AffineParams, LayerNormParams, ParamStore, TapeParams};
use crate::rng::rng_from;

pub const LOGVAR_CLAMP: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderVariant {
    Mlp,
    Transformer,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    pub(crate) fn apply(&self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Tanh => tape.tanh(x),
            Activation::Relu => tape.relu(x),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub input_dim: usize,
    pub latent_dim: usize,
    pub variant: EncoderVariant,
    pub hidden_dim: usize,
    pub num_layers: usize,
    /// Attention heads; transformer only.
    pub num_heads: usize,
    pub activation: Activation,
    /// Fixed sinusoidal positional encoding; disable to make the
    /// transformer permutation-invariant over tokens.
    pub positional: bool,
}

impl EncoderConfig {
    pub fn new(input_dim: usize, latent_dim: usize, variant: EncoderVariant) -> Self {
        EncoderConfig {
            input_dim,
            latent_dim,
            variant,
            hidden_dim: 64,
            num_layers: 2,
            num_heads: 4,
            activation: Activation::Tanh,
            positional: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.latent_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::config("encoder dims must be positive"));
        }
        if self.num_layers == 0 {
            return Err(Error::config("encoder needs at least one layer"));
        }
        if self.variant == EncoderVariant::Transformer {
            if self.num_heads == 0 {
                return Err(Error::config("transformer needs at least one head"));
            }
            if !self.hidden_dim.is_multiple_of(self.num_heads) {
                return Err(Error::config(format!(
                    "hidden_dim {} not divisible by num_heads {}",
                    self.hidden_dim, self.num_heads
                )));
            }
        }
        Ok(())
    }
}

/// The variational distribution q(b | x_p): diagonal Gaussian.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianPosterior {
    mu: Vec<f64>,
    sigma: Vec<f64>,
}

impl GaussianPosterior {
    pub fn new(mu: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        if mu.len() != sigma.len() || mu.is_empty() {
            return Err(Error::config(format!(
                "posterior needs matching non-empty mu/sigma, got {} and {}",
                mu.len(),
                sigma.len()
            )));
        }
        if !mu.iter().all(|v| v.is_finite()) || !sigma.iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(Error::config(
                "posterior needs finite mu and strictly positive finite sigma",
            ));
        }
        Ok(GaussianPosterior { mu, sigma })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }
}

/// One reparameterized draw b = mu + sigma * eps.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentSample {
    pub values: Vec<f64>,
    /// 1-based index of the draw within its batch of L samples.
    pub index: usize,
}

/// Draws L reparameterized samples from the posterior under a fixed seed.
pub fn reparameterize(
    posterior: &GaussianPosterior,
    l_samples: usize,
    seed: u64,
) -> Result<Vec<LatentSample>> {
    if l_samples == 0 {
        return Err(Error::usage("reparameterize needs L >= 1"));
    }
    let mut rng = rng_from(seed);
    let mut out = Vec::with_capacity(l_samples);
    for l in 1..=l_samples {
        let values = posterior
            .mu
            .iter()
            .zip(&posterior.sigma)
            .map(|(&m, &s)| {
                let eps: f64 = rng.sample(rand_distr::StandardNormal);
                m + s * eps
            })
            .collect();
        out.push(LatentSample { values, index: l });
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
enum Net {
    Mlp {
        layers: Vec<AffineParams>,
    },
    Transformer {
        embed: AffineParams,
        blocks: Vec<Block>,
        final_norm: LayerNormParams,
    },
}

/// Pre-norm transformer block: multi-head self-attention and a feed-forward
/// expansion, each with a residual connection.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub(crate) struct Block {
    norm_attn: LayerNormParams,
    wq: AffineParams,
    wk: AffineParams,
    wv: AffineParams,
    wo: AffineParams,
    norm_ff: LayerNormParams,
    ff_in: AffineParams,
    ff_out: AffineParams,
}

impl Block {
    pub(crate) fn init(
        store: &mut ParamStore,
        name: &str,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Block {
            norm_attn: LayerNormParams::init(store, &format!("{name}.norm_attn"), hidden),
            wq: AffineParams::init(store, &format!("{name}.wq"), hidden, hidden, rng),
            wk: AffineParams::init(store, &format!("{name}.wk"), hidden, hidden, rng),
            wv: AffineParams::init(store, &format!("{name}.wv"), hidden, hidden, rng),
            wo: AffineParams::init(store, &format!("{name}.wo"), hidden, hidden, rng),
            norm_ff: LayerNormParams::init(store, &format!("{name}.norm_ff"), hidden),
            ff_in: AffineParams::init(store, &format!("{name}.ff_in"), hidden, 2 * hidden, rng),
            ff_out: AffineParams::init(store, &format!("{name}.ff_out"), 2 * hidden, hidden, rng),
        }
    }

    pub(crate) fn forward(
        &self,
        tape: &mut Tape,
        tp: &TapeParams,
        h: Var,
        num_heads: usize,
        activation: Activation,
    ) -> Result<Var> {
        let hidden = tape.value(h).cols();
        let head_dim = hidden / num_heads;
        let normed = self.norm_attn.apply(tape, tp, h)?;
        let q = self.wq.apply(tape, tp, normed)?;
        let k = self.wk.apply(tape, tp, normed)?;
        let v = self.wv.apply(tape, tp, normed)?;
        let mut heads = Vec::with_capacity(num_heads);
        for i in 0..num_heads {
            let qi = tape.slice_cols(q, i * head_dim, head_dim)?;
            let ki = tape.slice_cols(k, i * head_dim, head_dim)?;
            let vi = tape.slice_cols(v, i * head_dim, head_dim)?;
            heads.push(tape.attention(qi, ki, vi)?);
        }
        let merged = tape.concat_cols(&heads)?;
        let attn = self.wo.apply(tape, tp, merged)?;
        let h = tape.add(h, attn)?;

        let normed = self.norm_ff.apply(tape, tp, h)?;
        let f = self.ff_in.apply(tape, tp, normed)?;
        let f = activation.apply(tape, f);
        let f = self.ff_out.apply(tape, tp, f)?;
        tape.add(h, f)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Encoder {
    pub config: EncoderConfig,
    net: Net,
    pub mu_head: AffineParams,
    pub logvar_head: AffineParams,
}

impl Encoder {
    pub fn new(
        config: EncoderConfig,
        store: &mut ParamStore,
        name: &str,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        config.validate()?;
        let h = config.hidden_dim;
        let net = match config.variant {
            EncoderVariant::Mlp => {
                let mut layers = Vec::with_capacity(config.num_layers);
                let mut fan_in = config.input_dim;
                for i in 0..config.num_layers {
                    layers.push(AffineParams::init(
                        store,
                        &format!("{name}.mlp{i}"),
                        fan_in,
                        h,
                        rng,
                    ));
                    fan_in = h;
                }
                Net::Mlp { layers }
            }
            EncoderVariant::Transformer => {
                let embed =
                    AffineParams::init(store, &format!("{name}.embed"), config.input_dim, h, rng);
                let blocks = (0..config.num_layers)
                    .map(|i| Block::init(store, &format!("{name}.block{i}"), h, rng))
                    .collect();
                let final_norm = LayerNormParams::init(store, &format!("{name}.final_norm"), h);
                Net::Transformer {
                    embed,
                    blocks,
                    final_norm,
                }
            }
        };
        Ok(Encoder {
            mu_head: AffineParams::init(store, &format!("{name}.mu_head"), h, config.latent_dim, rng),
            logvar_head: AffineParams::zeros(store, &format!("{name}.logvar_head"), h, config.latent_dim),
            config,
            net,
        })
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.cols() != self.config.input_dim {
            return Err(Error::config(format!(
                "encoder expects feature dim {}, got {}",
                self.config.input_dim,
                x.cols()
            )));
        }
        if !x.all_finite() {
            return Err(Error::data("encoder input contains non-finite values"));
        }
        Ok(())
    }

    /// Forward pass on the tape: returns (mu, clamped log-variance), each 1 x d.
    pub fn forward(&self, tape: &mut Tape, tp: &TapeParams, x: Var) -> Result<(Var, Var)> {
        let pooled = match &self.net {
            Net::Mlp { layers } => {
                let mut h = tape.mean_rows(x);
                for layer in layers {
                    let a = layer.apply(tape, tp, h)?;
                    h = self.config.activation.apply(tape, a);
                }
                h
            }
            Net::Transformer {
                embed,
                blocks,
                final_norm,
            } => {
                let mut h = embed.apply(tape, tp, x)?;
                if self.config.positional {
                    let tokens = tape.value(x).rows();
                    let pe = tape.constant(sinusoidal_encoding(tokens, self.config.hidden_dim));
                    h = tape.add(h, pe)?;
                }
                for block in blocks {
                    h = block.forward(tape, tp, h, self.config.num_heads, self.config.activation)?;
                }
                let normed = final_norm.apply(tape, tp, h)?;
                tape.mean_rows(normed)
            }
        };
        let mu = self.mu_head.apply(tape, tp, pooled)?;
        let logvar_raw = self.logvar_head.apply(tape, tp, pooled)?;
        let logvar = tape.clamp(logvar_raw, -LOGVAR_CLAMP, LOGVAR_CLAMP);
        Ok((mu, logvar))
    }

    /// Deterministic posterior for one modality input (tokens x input_dim).
    pub fn encode_posterior(&self, store: &ParamStore, x: &Tensor) -> Result<GaussianPosterior> {
        self.check_input(x)?;
        let mut tape = Tape::new();
        let tp = store.bind_const(&mut tape);
        let xv = tape.constant(x.clone());
        let (mu, logvar) = self.forward(&mut tape, &tp, xv)?;
        let mu = tape.value(mu).data().to_vec();
        let sigma = tape
            .value(logvar)
            .data()
            .iter()
            .map(|lv| (0.5 * lv).exp())
            .collect();
        GaussianPosterior::new(mu, sigma)
    }
}

/// Fixed sinusoidal positional encoding, tokens x dim.
pub(crate) fn sinusoidal_encoding(tokens: usize, dim: usize) -> Tensor {
    Tensor::from_fn(tokens, dim, |pos, i| {
        let exponent = (2 * (i / 2)) as f64 / dim as f64;
        let rate = pos as f64 / 10_000_f64.powf(exponent);
        if i % 2 == 0 {
            rate.sin()
        } else {
            rate.cos()
        }
    })
}
