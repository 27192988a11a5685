//! Run configuration: a flat, commented key = value file whose keys mirror
//! the command-line flags one-to-one. Flags override file values. Unknown
//! keys are rejected and referenced paths must exist at validation time.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use mcib::cib::{parse_stream_set, LossWeights, PairingMode, StreamSpec};
use mcib::encoder::{Activation, EncoderVariant};
use mcib::model::{DecoderVariant, ModelConfig};
use mcib::train::OptimizerKind;
use mcib::{Error, Result, TrainConfig};

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub data: Option<String>,
    pub out: Option<String>,
    pub model: Option<String>,
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub mc_samples: Option<usize>,
    pub optimizer: Option<String>,
    pub streams: Option<String>,
    pub pairing: Option<String>,
    pub encoder: Option<String>,
    pub decoder: Option<String>,
    pub activation: Option<String>,
    pub positional: Option<bool>,
    pub sample_at_eval: Option<bool>,
    pub hidden_dim: Option<usize>,
    pub num_layers: Option<usize>,
    pub num_heads: Option<usize>,
    pub latent_dim: Option<usize>,
    pub decoder_hidden: Option<usize>,
    pub patience: Option<usize>,
    pub split: Option<String>,
    pub lambda0: Option<f64>,
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub alpha0: Option<f64>,
    pub alpha1: Option<f64>,
    pub alpha2: Option<f64>,
    pub beta: Option<f64>,
    pub ablate_seeds: Option<usize>,
    pub descriptors: Option<String>,
    pub trials: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let cfg: FileConfig = toml::from_str(&text)
            .map_err(|e| Error::config(format!("config file {}: {e}", path.display())))?;
        for p in [&cfg.data, &cfg.model].into_iter().flatten() {
            if !Path::new(p).exists() {
                return Err(Error::config(format!(
                    "config file {} references missing path '{p}'",
                    path.display()
                )));
            }
        }
        Ok(cfg)
    }
}

/// Shared flags accepted by the training-family subcommands; every flag
/// mirrors a config-file key.
#[derive(Clone, Debug, Default, clap::Args)]
pub struct TrainFlags {
    /// Flat key = value config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Feature file (MCIB-FEAT v1).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output run directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Monte-Carlo samples per posterior during training.
    #[arg(long)]
    pub mc_samples: Option<usize>,
    /// sgd | adam
    #[arg(long)]
    pub optimizer: Option<String>,
    /// Stream set, e.g. "va+at+tv" (first letter primary, second auxiliary).
    #[arg(long)]
    pub streams: Option<String>,
    /// cross | aligned (aligned is a non-default ablation switch)
    #[arg(long)]
    pub pairing: Option<String>,
    /// transformer | mlp
    #[arg(long)]
    pub encoder: Option<String>,
    /// mlp | transformer
    #[arg(long)]
    pub decoder: Option<String>,
    /// tanh | relu
    #[arg(long)]
    pub activation: Option<String>,
    #[arg(long)]
    pub positional: Option<bool>,
    #[arg(long)]
    pub sample_at_eval: Option<bool>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub num_layers: Option<usize>,
    #[arg(long)]
    pub num_heads: Option<usize>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    #[arg(long)]
    pub decoder_hidden: Option<usize>,
    /// Early-stop patience on validation F1 (0 disables).
    #[arg(long)]
    pub patience: Option<usize>,
    /// Train/val/test fractions, e.g. "0.7/0.1/0.2".
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long)]
    pub lambda0: Option<f64>,
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub lambda2: Option<f64>,
    #[arg(long)]
    pub alpha0: Option<f64>,
    #[arg(long)]
    pub alpha1: Option<f64>,
    #[arg(long)]
    pub alpha2: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
}

/// Fully resolved run settings.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub data: Option<PathBuf>,
    pub out: PathBuf,
    pub split: (f64, f64, f64),
    pub train: TrainConfig,
    /// The raw file config, for command-specific keys.
    pub file: FileConfig,
}

pub fn parse_optimizer(s: &str) -> Result<OptimizerKind> {
    match s {
        "sgd" => Ok(OptimizerKind::Sgd),
        "adam" | "adaptive-moment" => Ok(OptimizerKind::Adam),
        _ => Err(Error::config(format!(
            "unknown optimizer '{s}' (use sgd or adam)"
        ))),
    }
}

pub fn parse_pairing(s: &str) -> Result<PairingMode> {
    match s {
        "cross" => Ok(PairingMode::Cross),
        "aligned" => Ok(PairingMode::Aligned),
        _ => Err(Error::config(format!(
            "unknown pairing '{s}' (use cross or aligned)"
        ))),
    }
}

pub fn parse_encoder(s: &str) -> Result<EncoderVariant> {
    match s {
        "mlp" => Ok(EncoderVariant::Mlp),
        "transformer" => Ok(EncoderVariant::Transformer),
        _ => Err(Error::config(format!(
            "unknown encoder variant '{s}' (use mlp or transformer)"
        ))),
    }
}

pub fn parse_decoder(s: &str) -> Result<DecoderVariant> {
    match s {
        "mlp" => Ok(DecoderVariant::Mlp),
        "transformer" => Ok(DecoderVariant::Transformer),
        _ => Err(Error::config(format!(
            "unknown decoder variant '{s}' (use mlp or transformer)"
        ))),
    }
}

pub fn parse_activation(s: &str) -> Result<Activation> {
    match s {
        "tanh" => Ok(Activation::Tanh),
        "relu" => Ok(Activation::Relu),
        _ => Err(Error::config(format!(
            "unknown activation '{s}' (use tanh or relu)"
        ))),
    }
}

pub fn parse_split(s: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<&str> = s.split('/').collect();
    if parts.len() != 3 {
        return Err(Error::config(format!(
            "split must be three fractions like 0.7/0.1/0.2, got '{s}'"
        )));
    }
    let mut f = [0.0; 3];
    for (i, p) in parts.iter().enumerate() {
        f[i] = p
            .trim()
            .parse()
            .map_err(|_| Error::config(format!("bad split fraction '{p}'")))?;
    }
    Ok((f[0], f[1], f[2]))
}

/// Default run root: $MCIB_RUN_ROOT or ./runs.
pub fn run_root() -> PathBuf {
    std::env::var_os("MCIB_RUN_ROOT")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

/// Merges flags over the config file (flags win) and builds the training
/// configuration for a dataset with the given dims/classes/tokens.
pub fn resolve(
    flags: &TrainFlags,
    command: &str,
    dims: [usize; 3],
    n_classes: usize,
) -> Result<Resolved> {
    let file = match &flags.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };

    let pick = |flag: &Option<String>, key: &Option<String>| -> Option<String> {
        flag.clone().or_else(|| key.clone())
    };

    let data = flags
        .data
        .clone()
        .or_else(|| file.data.as_ref().map(PathBuf::from));
    if let Some(d) = &data {
        if !d.exists() {
            return Err(Error::config(format!(
                "data path '{}' does not exist",
                d.display()
            )));
        }
    }
    let out = flags
        .out
        .clone()
        .or_else(|| file.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| run_root().join(command));

    let mut model = ModelConfig::new(dims, n_classes);
    if let Some(v) = pick(&flags.encoder, &file.encoder) {
        model.encoder_variant = parse_encoder(&v)?;
    }
    if let Some(v) = pick(&flags.decoder, &file.decoder) {
        model.decoder_variant = parse_decoder(&v)?;
    }
    if let Some(v) = pick(&flags.activation, &file.activation) {
        model.activation = parse_activation(&v)?;
    }
    if let Some(v) = flags.positional.or(file.positional) {
        model.positional = v;
    }
    if let Some(v) = flags.sample_at_eval.or(file.sample_at_eval) {
        model.sample_at_eval = v;
    }
    if let Some(v) = flags.hidden_dim.or(file.hidden_dim) {
        model.hidden_dim = v;
    }
    if let Some(v) = flags.num_layers.or(file.num_layers) {
        model.num_layers = v;
    }
    if let Some(v) = flags.num_heads.or(file.num_heads) {
        model.num_heads = v;
    }
    if let Some(v) = flags.latent_dim.or(file.latent_dim) {
        model.latent_dim = v;
    }
    if let Some(v) = flags.decoder_hidden.or(file.decoder_hidden) {
        model.decoder_hidden = v;
    }

    let mut weights = LossWeights::default();
    let lambda_overrides = [
        flags.lambda0.or(file.lambda0),
        flags.lambda1.or(file.lambda1),
        flags.lambda2.or(file.lambda2),
    ];
    let alpha_overrides = [
        flags.alpha0.or(file.alpha0),
        flags.alpha1.or(file.alpha1),
        flags.alpha2.or(file.alpha2),
    ];
    for i in 0..3 {
        if let Some(v) = lambda_overrides[i] {
            weights.lambda[i] = v;
        }
        if let Some(v) = alpha_overrides[i] {
            weights.alpha[i] = v;
        }
    }
    if let Some(v) = flags.beta.or(file.beta) {
        weights.beta = v;
    }

    let stream_str = pick(&flags.streams, &file.streams).unwrap_or_else(|| "va+at+tv".to_string());
    let parsed = parse_stream_set(&stream_str)?;
    let streams: Vec<StreamSpec> = parsed
        .into_iter()
        .map(|(p, a)| StreamSpec::new(p, a, weights.lambda[p.min(2)]))
        .collect::<Result<_>>()?;

    let mut train = TrainConfig::new(model, streams);
    train.weights = weights;
    if let Some(v) = flags.seed.or(file.seed) {
        train.seed = v;
    }
    if let Some(v) = flags.epochs.or(file.epochs) {
        train.epochs = v;
    }
    if let Some(v) = flags.batch_size.or(file.batch_size) {
        train.batch_size = v;
    }
    if let Some(v) = flags.learning_rate.or(file.learning_rate) {
        train.learning_rate = v;
    }
    if let Some(v) = flags.mc_samples.or(file.mc_samples) {
        train.mc_samples = v;
    }
    if let Some(v) = flags.patience.or(file.patience) {
        train.patience = v;
    }
    if let Some(v) = pick(&flags.optimizer, &file.optimizer) {
        train.optimizer = parse_optimizer(&v)?;
    }
    if let Some(v) = pick(&flags.pairing, &file.pairing) {
        train.pairing = parse_pairing(&v)?;
    }
    train.validate()?;

    let split = match pick(&flags.split, &file.split) {
        Some(s) => parse_split(&s)?,
        None => (0.7, 0.1, 0.2),
    };

    Ok(Resolved {
        data,
        out,
        split,
        train,
        file,
    })
}
