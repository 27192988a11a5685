//! Subcommand implementations. Every command reads inputs, writes
//! machine-readable artifacts into its run directory, and prints a short
//! human summary.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;

use mcib::analysis::{fusion_gain_report, PredictionRun};
use mcib::audit::{audit_annotations, parse_annotations};
use mcib::cib::{batch_loss, NoisePlan, PairingMode, StreamSpec};
use mcib::data::{load_features, save_features, split_stratified, synth_generate, SynthConfig};
use mcib::diff::{grad_check, Tape};
use mcib::model::{McibModel, ModelConfig};
use mcib::params::TapeParams;
use mcib::train::{
    ablate as run_ablate, ablation_csv, default_matrix, evaluate, hyper_search, parse_descriptor,
    predictions, train as run_train, AblationSpec, Metrics, SearchSpace,
};
use mcib::{Dataset, Error, Result};

use crate::config::{resolve, run_root, Resolved, TrainFlags};

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path.display().to_string(), e))
}

fn write_string(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).map_err(|e| Error::io(path.display().to_string(), e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value)
        .map_err(|e| Error::config(format!("serialization failed: {e}")))?;
    write_string(path, &json)
}

fn history_csv(history: &[mcib::train::EpochStats]) -> String {
    let mut out = String::from("epoch,total_loss,val_weighted_f1\n");
    for h in history {
        match h.val_f1 {
            Some(f1) => out.push_str(&format!("{},{},{}\n", h.epoch, h.total_loss, f1)),
            None => out.push_str(&format!("{},{},\n", h.epoch, h.total_loss)),
        }
    }
    out
}

fn predictions_csv(ids: &[u64], truth: &[usize], preds: &[usize]) -> String {
    let mut out = String::from("id,truth,pred\n");
    for i in 0..ids.len() {
        out.push_str(&format!("{},{},{}\n", ids[i], truth[i], preds[i]));
    }
    out
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    data: Option<String>,
    out: String,
    split: (f64, f64, f64),
    config: &'a mcib::TrainConfig,
}

fn write_manifest(resolved: &Resolved, command: &str) -> Result<()> {
    ensure_dir(&resolved.out)?;
    write_json(
        &resolved.out.join("manifest.json"),
        &Manifest {
            command,
            data: resolved.data.as_ref().map(|p| p.display().to_string()),
            out: resolved.out.display().to_string(),
            split: resolved.split,
            config: &resolved.train,
        },
    )
}

fn require_data(resolved: &Resolved) -> Result<&PathBuf> {
    resolved
        .data
        .as_ref()
        .ok_or_else(|| Error::config("missing required --data (or config key 'data')"))
}

// ---------------------------------------------------------------- synth --

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Number of samples.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Complementarity knob in [0, 1].
    #[arg(long, default_value_t = 0.0)]
    pub c: f64,
    /// Redundancy knob in [0, 1].
    #[arg(long, default_value_t = 0.0)]
    pub r: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Per-modality dims as "d0,d1,d2".
    #[arg(long, default_value = "24,24,24")]
    pub dims: String,
    #[arg(long, default_value_t = 1)]
    pub tokens: usize,
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.0)]
    pub shared: f64,
    /// Portion of the complementary mass only visible jointly.
    #[arg(long, default_value_t = 0.0)]
    pub synergy: f64,
    #[arg(long, default_value_t = 1.0)]
    pub amplitude: f64,
    #[arg(long, default_value_t = 4)]
    pub signal_dims: usize,
    #[arg(long, default_value_t = 6)]
    pub distractor_slots: usize,
    /// Modality carrying the primary signal block (0=a, 1=v, 2=t).
    #[arg(long, default_value_t = 0)]
    pub primary: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let dims: Vec<usize> = args
        .dims
        .split(',')
        .map(|d| {
            d.trim()
                .parse()
                .map_err(|_| Error::config(format!("bad dim '{d}'")))
        })
        .collect::<Result<_>>()?;
    if dims.len() != 3 {
        return Err(Error::config("dims must be three comma-separated integers"));
    }
    let cfg = SynthConfig {
        n_samples: args.n,
        dims: [dims[0], dims[1], dims[2]],
        tokens: args.tokens,
        complementarity: args.c,
        redundancy: args.r,
        shared_fraction: args.shared,
        synergy_fraction: args.synergy,
        noise_scale: args.noise,
        amplitude: args.amplitude,
        signal_dims: args.signal_dims,
        distractor_slots: args.distractor_slots,
        primary_modality: args.primary,
        seed: args.seed,
        ..SynthConfig::default()
    };
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| run_root().join("synth"));
    ensure_dir(&out)?;
    let (dataset, bayes) = synth_generate(&cfg)?;
    save_features(&dataset, &out.join("dataset.feat"))?;
    write_json(&out.join("bayes.json"), &bayes)?;
    write_json(&out.join("manifest.json"), &cfg)?;
    println!(
        "wrote {} samples to {} (bayes: single {:?}, fused {:.4})",
        dataset.len(),
        out.join("dataset.feat").display(),
        bayes.per_modality,
        bayes.fused
    );
    Ok(())
}

// ---------------------------------------------------------------- train --

pub fn train(flags: &TrainFlags) -> Result<()> {
    let probe = probe_dataset(flags)?;
    let resolved = resolve(flags, "train", probe.dims, probe.n_classes)?;
    let dataset = probe;
    write_manifest(&resolved, "train")?;

    let (train_set, val_set, test_set) = split_stratified(&dataset, resolved.split, resolved.train.seed)?;
    let val = if val_set.is_empty() { None } else { Some(&val_set) };
    let out = run_train(&train_set, val, &resolved.train)?;

    write_string(&resolved.out.join("history.csv"), &history_csv(&out.history))?;
    out.model.save(&resolved.out.join("model.json"))?;

    let eval_set = if test_set.is_empty() { &train_set } else { &test_set };
    let metrics = evaluate(&out.model, eval_set)?;
    write_json(&resolved.out.join("metrics.json"), &metrics)?;
    let preds = predictions(&out.model, eval_set)?;
    write_string(
        &resolved.out.join("predictions.csv"),
        &predictions_csv(&eval_set.ids, &eval_set.labels(), &preds),
    )?;

    print_metrics("test", &metrics);
    println!(
        "trained {} epochs; artifacts in {}",
        out.history.len(),
        resolved.out.display()
    );
    Ok(())
}

fn probe_dataset(flags: &TrainFlags) -> Result<Dataset> {
    // Resolve just enough to find the data path, then load it for dims.
    let pre = resolve(flags, "train", [1, 1, 1], 2);
    let data = match &flags.data {
        Some(d) => d.clone(),
        None => require_data(&pre?)?.clone(),
    };
    load_features(&data)
}

fn print_metrics(split: &str, m: &Metrics) {
    println!(
        "{split}: weighted P {:.4} / R {:.4} / F1 {:.4} (accuracy {:.4}, n={})",
        m.weighted_precision, m.weighted_recall, m.weighted_f1, m.accuracy, m.n_samples
    );
}

// ----------------------------------------------------------------- eval --

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Trained model file (model.json from a train run).
    #[arg(long)]
    pub model: PathBuf,
    /// Feature file to evaluate on (no splitting).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let model = McibModel::load(&args.model)?;
    let dataset = load_features(&args.data)?;
    if model.cfg.modality_dims != dataset.dims {
        return Err(Error::config(format!(
            "model expects dims {:?}, dataset has {:?}",
            model.cfg.modality_dims, dataset.dims
        )));
    }
    let out = args.out.clone().unwrap_or_else(|| run_root().join("eval"));
    ensure_dir(&out)?;
    let metrics = evaluate(&model, &dataset)?;
    write_json(&out.join("metrics.json"), &metrics)?;
    let preds = predictions(&model, &dataset)?;
    write_string(
        &out.join("predictions.csv"),
        &predictions_csv(&dataset.ids, &dataset.labels(), &preds),
    )?;
    print_metrics("eval", &metrics);
    Ok(())
}

// --------------------------------------------------------------- ablate --

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[command(flatten)]
    pub flags: TrainFlags,
    /// Comma-separated descriptors (single:t, pair:va, triple:va+at+tv,
    /// encoder:mlp, granularity:coarse); defaults to the full matrix.
    #[arg(long)]
    pub descriptors: Option<String>,
    /// Seeds per cell.
    #[arg(long)]
    pub ablate_seeds: Option<usize>,
}

pub fn ablate(args: &AblateArgs) -> Result<()> {
    let dataset = probe_dataset(&args.flags)?;
    let mut resolved = resolve(&args.flags, "ablate", dataset.dims, dataset.n_classes)?;
    write_manifest(&resolved, "ablate")?;

    let descriptors = args
        .descriptors
        .clone()
        .or_else(|| resolved.file.descriptors.clone());
    let specs: Vec<AblationSpec> = match &descriptors {
        Some(s) => s
            .split(',')
            .map(|d| parse_descriptor(d.trim()))
            .collect::<Result<_>>()?,
        None => default_matrix(),
    };
    let seed_count = args
        .ablate_seeds
        .or(resolved.file.ablate_seeds)
        .unwrap_or(5);
    let seeds: Vec<u64> = (0..seed_count as u64)
        .map(|i| resolved.train.seed.wrapping_add(i))
        .collect();
    resolved.train.validate()?;
    let cells = run_ablate(&dataset, &resolved.train, &specs, &seeds)?;
    write_string(&resolved.out.join("ablation.csv"), &ablation_csv(&cells))?;
    write_json(&resolved.out.join("ablation_runs.json"), &cells)?;
    for cell in &cells {
        println!(
            "{:<24} P {:.4}  R {:.4}  F1 {:.4}  ({} seeds)",
            cell.config, cell.precision, cell.recall, cell.f1, cell.seed_count
        );
    }
    println!("ablation table in {}", resolved.out.join("ablation.csv").display());
    Ok(())
}

// --------------------------------------------------------------- search --

#[derive(Args, Debug)]
pub struct SearchArgs {
    #[command(flatten)]
    pub flags: TrainFlags,
    /// Random configurations to try.
    #[arg(long)]
    pub trials: Option<usize>,
}

pub fn search(args: &SearchArgs) -> Result<()> {
    let dataset = probe_dataset(&args.flags)?;
    let resolved = resolve(&args.flags, "search", dataset.dims, dataset.n_classes)?;
    write_manifest(&resolved, "search")?;
    let (train_set, val_set, _) = split_stratified(&dataset, resolved.split, resolved.train.seed)?;
    let trials = args.trials.or(resolved.file.trials).unwrap_or(10);
    let out = hyper_search(
        &train_set,
        &val_set,
        &resolved.train,
        &SearchSpace::default(),
        trials,
        resolved.train.seed,
    )?;
    write_json(&resolved.out.join("search_trace.json"), &out)?;
    println!(
        "best trial {} of {}: val F1 {:.4} (lambda {:?}, hidden {})",
        out.best_index,
        out.trials.len(),
        out.trials[out.best_index].val_f1,
        out.trials[out.best_index].lambda,
        out.trials[out.best_index].hidden
    );
    Ok(())
}

// ---------------------------------------------------------------- audit --

#[derive(Args, Debug)]
pub struct AuditArgs {
    /// Annotation file: `utterance_id<TAB>speaker<TAB>sarcasm{0,1}[<TAB>implicit<TAB>explicit]`.
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn audit(args: &AuditArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.annotations)
        .map_err(|e| Error::io(args.annotations.display().to_string(), e))?;
    let records = parse_annotations(&text)?;
    let report = audit_annotations(&records)?;
    let out = args.out.clone().unwrap_or_else(|| run_root().join("audit"));
    ensure_dir(&out)?;
    write_json(&out.join("audit.json"), &report)?;
    write_string(&out.join("audit.csv"), &report.to_csv())?;
    if let Some(c) = &report.character {
        println!(
            "character vs sarcasm: chi2 {:.4} (dof {}, p {:.3e}) over {} speakers",
            c.chi_square.statistic,
            c.chi_square.dof,
            c.chi_square.p_value,
            c.speakers.len()
        );
    }
    if let Some(e) = &report.consistency {
        println!(
            "emotion consistency vs sarcasm: chi2 {:.4} (p {:.3e}), phi {:.4}",
            e.chi_square.statistic, e.chi_square.p_value, e.phi
        );
    }
    println!("audit report in {}", out.display());
    Ok(())
}

// -------------------------------------------------------------- analyze --

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    /// Fused-run predictions.csv (id,truth,pred).
    #[arg(long)]
    pub fused: PathBuf,
    /// Single-run predictions.csv files to compare against.
    #[arg(long = "single", required = true)]
    pub singles: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn run_label(path: &Path) -> String {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    if stem != "predictions" {
        return stem.to_string();
    }
    // Prediction files are conventionally named predictions.csv inside a run
    // directory; the directory name is the informative part.
    path.parent()
        .and_then(|p| p.file_name())
        .and_then(|s| s.to_str())
        .unwrap_or(stem)
        .to_string()
}

fn read_prediction_file(path: &Path) -> Result<(PredictionRun, Vec<usize>)> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let label = run_label(path);
    let mut ids = Vec::new();
    let mut truth = Vec::new();
    let mut preds = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        if line_no == 0 || line.trim().is_empty() {
            continue; // header
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::data(format!(
                "{} line {}: expected id,truth,pred",
                path.display(),
                line_no + 1
            )));
        }
        let parse = |f: &str, what: &str| -> Result<usize> {
            f.trim().parse().map_err(|_| {
                Error::data(format!(
                    "{} line {}: bad {what} '{f}'",
                    path.display(),
                    line_no + 1
                ))
            })
        };
        ids.push(parse(fields[0], "id")? as u64);
        truth.push(parse(fields[1], "truth")?);
        preds.push(parse(fields[2], "pred")?);
    }
    if ids.is_empty() {
        return Err(Error::data(format!(
            "{} holds no prediction rows",
            path.display()
        )));
    }
    Ok((PredictionRun { label, ids, preds }, truth))
}

pub fn analyze(args: &AnalyzeArgs) -> Result<()> {
    let (fused, truth) = read_prediction_file(&args.fused)?;
    let mut singles: Vec<PredictionRun> = Vec::new();
    for path in &args.singles {
        let (mut run, run_truth) = read_prediction_file(path)?;
        if run_truth != truth {
            return Err(Error::usage(format!(
                "truth labels in {} differ from the fused run; runs must share the test split",
                path.display()
            )));
        }
        // Keep figure names distinct when labels collide.
        let clashes = singles.iter().filter(|s| s.label == run.label).count();
        if clashes > 0 || run.label == fused.label {
            run.label = format!("{}-{}", run.label, clashes + 2);
        }
        singles.push(run);
    }
    let reports = fusion_gain_report(&singles, &fused, &truth)?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| run_root().join("analyze"));
    let figures = out.join("figures");
    ensure_dir(&figures)?;
    write_json(&out.join("fusion_gain.json"), &reports)?;
    let mut csv = String::from(mcib::analysis::FusionPairReport::csv_header());
    csv.push('\n');
    for r in &reports {
        csv.push_str(&r.csv_row());
        csv.push('\n');
        write_string(&figures.join(r.figure_name()), &r.to_svg())?;
        println!(
            "{} vs {}: gain {:.4} (only_A {:.4}, only_B {:.4}, both {:.4})",
            r.pair.a, r.pair.b, r.net_gain, r.regions.only_a, r.regions.only_b, r.regions.both
        );
    }
    write_string(&out.join("fusion_gain.csv"), &csv)?;
    println!("analysis in {}", out.display());
    Ok(())
}

// ------------------------------------------------------------ gradcheck --

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// Synthetic batch size.
    #[arg(long, default_value_t = 4)]
    pub batch: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// transformer | mlp
    #[arg(long, default_value = "transformer")]
    pub encoder: String,
    /// Monte-Carlo samples with frozen noise.
    #[arg(long, default_value_t = 4)]
    pub mc_samples: usize,
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-4)]
    pub step: f64,
    /// Failure threshold on the max relative error.
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
}

pub fn gradcheck(args: &GradcheckArgs) -> Result<()> {
    let data_cfg = SynthConfig {
        n_samples: args.batch,
        dims: [8, 8, 8],
        tokens: 2,
        signal_dims: 2,
        distractor_slots: 2,
        complementarity: 0.5,
        seed: args.seed,
        ..SynthConfig::default()
    };
    let (dataset, _) = synth_generate(&data_cfg)?;

    let mut model_cfg = ModelConfig::new([8, 8, 8], 2);
    model_cfg.latent_dim = 2;
    model_cfg.hidden_dim = 8;
    model_cfg.num_layers = 1;
    model_cfg.num_heads = 2;
    model_cfg.decoder_hidden = 8;
    model_cfg.encoder_variant = crate::config::parse_encoder(&args.encoder)?;
    let specs = vec![
        StreamSpec::new(0, Some(2), 2.0)?,
        StreamSpec::new(1, Some(0), 3.0)?,
        StreamSpec::new(2, Some(1), 4.0)?,
    ];
    let model = McibModel::new(model_cfg, &specs, args.seed)?;
    let weights = mcib::cib::LossWeights::default();
    let noise = NoisePlan::generate(
        dataset.len(),
        model.streams.len(),
        args.mc_samples,
        model.cfg.latent_dim,
        args.seed,
    );
    let bundles: Vec<&mcib::ModalityBundle> = dataset.bundles.iter().collect();
    let params = model.store.tensors().to_vec();
    let report = grad_check(&params, args.step, |tape: &mut Tape, vars| {
        let tp = TapeParams::from_vars(vars.to_vec());
        let loss = batch_loss(
            tape,
            &model,
            &tp,
            &bundles,
            &weights,
            PairingMode::Cross,
            &noise,
        )?;
        Ok(loss.total)
    })?;
    println!(
        "gradcheck: max relative error {:.3e} over {} coordinates (param {}, coord {})",
        report.max_rel_error, report.coords_checked, report.worst_param, report.worst_coord
    );
    if report.max_rel_error >= args.tolerance {
        return Err(Error::usage(format!(
            "gradient check failed: {:.3e} >= {:.0e}",
            report.max_rel_error, args.tolerance
        )));
    }
    println!("gradcheck: PASS (< {:.0e})", args.tolerance);
    Ok(())
}
