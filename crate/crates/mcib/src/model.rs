//! Model assembly: per-stream encoder/decoder pairs and the fusion head.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cib::StreamSpec;
use crate::data::ModalityBundle;
use crate::diff::{Tape, Var};
use crate::encoder::{
    sinusoidal_encoding, Activation, Block, Encoder, EncoderConfig, EncoderVariant,
    GaussianPosterior,
};
use crate::error::{Error, Result};
use crate::params::{AffineParams, ParamStore, TapeParams};
use crate::rng::{rng_for, rng_from};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecoderVariant {
    Mlp,
    Transformer,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelConfig {
    pub modality_dims: [usize; 3],
    pub n_classes: usize,
    pub latent_dim: usize,
    pub encoder_variant: EncoderVariant,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub activation: Activation,
    pub positional: bool,
    pub decoder_variant: DecoderVariant,
    pub decoder_hidden: usize,
    /// Draw a latent sample at inference instead of using the posterior mean.
    pub sample_at_eval: bool,
}

impl ModelConfig {
    pub fn new(modality_dims: [usize; 3], n_classes: usize) -> Self {
        ModelConfig {
            modality_dims,
            n_classes,
            latent_dim: 16,
            encoder_variant: EncoderVariant::Transformer,
            hidden_dim: 64,
            num_layers: 2,
            num_heads: 4,
            activation: Activation::Tanh,
            positional: true,
            decoder_variant: DecoderVariant::Mlp,
            decoder_hidden: 64,
            sample_at_eval: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::config("need at least 2 classes"));
        }
        if self.modality_dims.contains(&0) {
            return Err(Error::config("modality dims must be positive"));
        }
        if self.latent_dim == 0 || self.decoder_hidden == 0 {
            return Err(Error::config("latent and decoder dims must be positive"));
        }
        if self.decoder_variant == DecoderVariant::Transformer
            && !self.decoder_hidden.is_multiple_of(self.num_heads)
        {
            return Err(Error::config(format!(
                "decoder_hidden {} not divisible by num_heads {}",
                self.decoder_hidden, self.num_heads
            )));
        }
        Ok(())
    }

    fn encoder_config(&self, input_dim: usize) -> EncoderConfig {
        EncoderConfig {
            input_dim,
            latent_dim: self.latent_dim,
            variant: self.encoder_variant,
            hidden_dim: self.hidden_dim,
            num_layers: self.num_layers,
            num_heads: self.num_heads,
            activation: self.activation,
            positional: self.positional,
        }
    }
}

/// q(y | b, x_a): the auxiliary sequence is pooled (or transformer-encoded
/// and pooled), concatenated with the latent, and passed through a two-layer
/// network with a softmax output. Without an auxiliary the decoder models
/// q(y | b) for plain-IB streams.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Decoder {
    aux: Option<AuxPath>,
    hidden: AffineParams,
    out: AffineParams,
    activation: Activation,
    n_classes: usize,
    positional: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
enum AuxPath {
    /// Mean-pool the auxiliary tokens.
    Pool { dim: usize },
    /// One transformer block over the auxiliary tokens, then mean-pool.
    Transformer {
        embed: AffineParams,
        block: Block,
        num_heads: usize,
        hidden: usize,
    },
}

impl Decoder {
    fn new(
        cfg: &ModelConfig,
        aux_dim: Option<usize>,
        store: &mut ParamStore,
        name: &str,
        rng: &mut impl Rng,
    ) -> Self {
        let aux = aux_dim.map(|dim| match cfg.decoder_variant {
            DecoderVariant::Mlp => AuxPath::Pool { dim },
            DecoderVariant::Transformer => AuxPath::Transformer {
                embed: AffineParams::init(store, &format!("{name}.aux_embed"), dim, cfg.decoder_hidden, rng),
                block: Block::init(store, &format!("{name}.aux_block"), cfg.decoder_hidden, rng),
                num_heads: cfg.num_heads,
                hidden: cfg.decoder_hidden,
            },
        });
        let pooled_dim = match &aux {
            Some(AuxPath::Pool { dim }) => *dim,
            Some(AuxPath::Transformer { hidden, .. }) => *hidden,
            None => 0,
        };
        let in_dim = cfg.latent_dim + pooled_dim;
        Decoder {
            aux,
            hidden: AffineParams::init(store, &format!("{name}.hidden"), in_dim, cfg.decoder_hidden, rng),
            out: AffineParams::init(store, &format!("{name}.out"), cfg.decoder_hidden, cfg.n_classes, rng),
            activation: cfg.activation,
            n_classes: cfg.n_classes,
            positional: cfg.positional,
        }
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn hidden_layer(&self) -> &AffineParams {
        &self.hidden
    }

    pub fn out_head(&self) -> &AffineParams {
        &self.out
    }

    /// Logits (1 x classes) for one latent row, with the auxiliary sequence
    /// when the stream has one.
    pub fn forward(
        &self,
        tape: &mut Tape,
        tp: &TapeParams,
        b: Var,
        x_aux: Option<Var>,
    ) -> Result<Var> {
        let input = match (&self.aux, x_aux) {
            (Some(path), Some(x)) => {
                let pooled = match path {
                    AuxPath::Pool { .. } => tape.mean_rows(x),
                    AuxPath::Transformer {
                        embed,
                        block,
                        num_heads,
                        hidden,
                    } => {
                        let mut h = embed.apply(tape, tp, x)?;
                        if self.positional {
                            let tokens = tape.value(x).rows();
                            let pe = tape.constant(sinusoidal_encoding(tokens, *hidden));
                            h = tape.add(h, pe)?;
                        }
                        let h = block.forward(tape, tp, h, *num_heads, self.activation)?;
                        tape.mean_rows(h)
                    }
                };
                tape.concat_cols(&[b, pooled])?
            }
            (None, None) => b,
            (Some(_), None) => {
                return Err(Error::usage("decoder expects an auxiliary input"))
            }
            (None, Some(_)) => {
                return Err(Error::usage("decoder takes no auxiliary input"))
            }
        };
        let h = self.hidden.apply(tape, tp, input)?;
        let h = self.activation.apply(tape, h);
        self.out.apply(tape, tp, h)
    }
}

/// One conditional-information-bottleneck stream.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Stream {
    pub spec: StreamSpec,
    pub encoder: Encoder,
    pub decoder: Decoder,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub label: usize,
    pub probs: Vec<f64>,
}

/// The assembled model: one encoder/decoder pair per stream plus an affine
/// fusion head over the concatenated latents.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct McibModel {
    pub store: ParamStore,
    pub cfg: ModelConfig,
    pub streams: Vec<Stream>,
    pub head: AffineParams,
}

impl McibModel {
    pub fn new(cfg: ModelConfig, specs: &[StreamSpec], seed: u64) -> Result<Self> {
        cfg.validate()?;
        if specs.is_empty() || specs.len() > 3 {
            return Err(Error::config(format!(
                "need between 1 and 3 streams, got {}",
                specs.len()
            )));
        }
        for spec in specs {
            spec.validate()?;
        }
        let mut primaries: Vec<usize> = specs.iter().map(|s| s.primary).collect();
        primaries.dedup();
        if primaries.len() != specs.len() {
            return Err(Error::config(
                "each stream needs a distinct primary modality",
            ));
        }

        let mut store = ParamStore::new();
        let mut rng = rng_from(seed);
        let mut streams = Vec::with_capacity(specs.len());
        for spec in specs {
            let name = format!("stream_{}", spec.label());
            let enc_cfg = cfg.encoder_config(cfg.modality_dims[spec.primary]);
            let encoder = Encoder::new(enc_cfg, &mut store, &name, &mut rng)?;
            let aux_dim = spec.auxiliary.map(|a| cfg.modality_dims[a]);
            let decoder = Decoder::new(&cfg, aux_dim, &mut store, &format!("{name}.dec"), &mut rng);
            streams.push(Stream {
                spec: *spec,
                encoder,
                decoder,
            });
        }
        let head = AffineParams::init(
            &mut store,
            "fusion_head",
            cfg.latent_dim * specs.len(),
            cfg.n_classes,
            &mut rng,
        );
        Ok(McibModel {
            store,
            cfg,
            streams,
            head,
        })
    }

    pub fn n_streams(&self) -> usize {
        self.streams.len()
    }

    fn check_bundle(&self, bundle: &ModalityBundle) -> Result<()> {
        for stream in &self.streams {
            let p = stream.spec.primary;
            if bundle.x[p].cols() != self.cfg.modality_dims[p] {
                return Err(Error::config(format!(
                    "modality {p} has dim {}, model expects {}",
                    bundle.x[p].cols(),
                    self.cfg.modality_dims[p]
                )));
            }
        }
        Ok(())
    }

    /// Posterior of every stream for one sample (deterministic).
    pub fn posteriors(&self, bundle: &ModalityBundle) -> Result<Vec<GaussianPosterior>> {
        self.check_bundle(bundle)?;
        self.streams
            .iter()
            .map(|s| {
                s.encoder
                    .encode_posterior(&self.store, &bundle.x[s.spec.primary])
            })
            .collect()
    }

    /// Deterministic prediction from the posterior means.
    pub fn predict(&self, bundle: &ModalityBundle) -> Result<Prediction> {
        let posteriors = self.posteriors(bundle)?;
        let latents: Vec<&[f64]> = posteriors.iter().map(|p| p.mu()).collect();
        self.predict_from_latents(&latents)
    }

    /// Prediction from one reparameterized sample per stream (seeded).
    pub fn predict_sampled(&self, bundle: &ModalityBundle, seed: u64) -> Result<Prediction> {
        let posteriors = self.posteriors(bundle)?;
        let mut draws = Vec::with_capacity(posteriors.len());
        for (i, p) in posteriors.iter().enumerate() {
            let mut rng = rng_for(seed, "predict", i as u64);
            let values: Vec<f64> = p
                .mu()
                .iter()
                .zip(p.sigma())
                .map(|(&m, &s)| {
                    let eps: f64 = rng.sample(rand_distr::StandardNormal);
                    m + s * eps
                })
                .collect();
            draws.push(values);
        }
        let latents: Vec<&[f64]> = draws.iter().map(|d| d.as_slice()).collect();
        self.predict_from_latents(&latents)
    }

    fn predict_from_latents(&self, latents: &[&[f64]]) -> Result<Prediction> {
        let probs = crate::cib::fuse_and_predict(latents, &self.head, &self.store)?;
        let label = argmax(&probs);
        Ok(Prediction { label, probs })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let json = serde_json::to_string(self)
            .map_err(|e| Error::config(format!("model serialization failed: {e}")))?;
        std::fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::data(format!("model file {} is malformed: {e}", path.display())))
    }
}

/// Index of the largest value; lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
