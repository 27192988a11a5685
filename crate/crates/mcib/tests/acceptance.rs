//! Acceptance suite: one test per criterion, each printing a PASS line.
//! Oracles here are independent straight-line reimplementations; expected
//! constants were computed beforehand with high-precision arithmetic.

#![allow(clippy::excessive_precision, clippy::needless_range_loop)]

use rayon::prelude::*;

use mcib::audit::{chi_square_test, phi_coefficient, ContingencyTable};
use mcib::cib::{batch_loss, conditional_log_likelihood, kl_to_standard_normal, NoisePlan};
use mcib::cib::{LossWeights, PairingMode, StreamSpec};
use mcib::data::{split_stratified, synth_generate, SynthConfig};
use mcib::diff::grad_check;
use mcib::encoder::{reparameterize, EncoderVariant, GaussianPosterior};
use mcib::model::{McibModel, ModelConfig};
use mcib::params::TapeParams;
use mcib::train::{evaluate, train, TrainConfig};
use mcib::{analysis, Dataset, ModalityBundle};

fn pass(id: u32, name: &str, detail: &str) {
    println!("ACCEPTANCE {id:02} {name}: PASS ({detail})");
}

/// Criterion 1: the closed-form KL against numerical integration of
/// q log(q/r) for d = 1, 200 random posteriors, absolute tolerance 1e-3.
#[test]
fn criterion_01_kl_closed_form() {
    // Independent oracle: composite Simpson integration of the KL integrand.
    let simpson_kl = |mu: f64, sigma: f64| -> f64 {
        let lo = mu - 14.0 * sigma.max(1.0);
        let hi = mu + 14.0 * sigma.max(1.0);
        let n = 20_000usize; // even
        let h = (hi - lo) / n as f64;
        let integrand = |x: f64| {
            let q = (-0.5 * ((x - mu) / sigma).powi(2)).exp()
                / (sigma * (2.0 * std::f64::consts::PI).sqrt());
            let log_q = -0.5 * ((x - mu) / sigma).powi(2)
                - sigma.ln()
                - 0.5 * (2.0 * std::f64::consts::PI).ln();
            let log_r = -0.5 * x * x - 0.5 * (2.0 * std::f64::consts::PI).ln();
            q * (log_q - log_r)
        };
        let mut sum = integrand(lo) + integrand(hi);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            sum += w * integrand(lo + i as f64 * h);
        }
        sum * h / 3.0
    };

    // Exact anchor points.
    let at_prior = kl_to_standard_normal(&GaussianPosterior::new(vec![0.0], vec![1.0]).unwrap());
    assert_eq!(at_prior, 0.0, "KL at the prior must be exactly 0");
    let shifted = kl_to_standard_normal(&GaussianPosterior::new(vec![1.0], vec![1.0]).unwrap());
    assert!((shifted - 0.5).abs() < 1e-15, "KL(mu=1, sigma=1) = 0.5");

    use rand::Rng;
    let mut rng = mcib::rng::rng_from(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let mu = rng.gen_range(-3.0..3.0);
        let sigma = rng.gen_range(0.1..3.0);
        let closed =
            kl_to_standard_normal(&GaussianPosterior::new(vec![mu], vec![sigma]).unwrap());
        let numeric = simpson_kl(mu, sigma);
        let err = (closed - numeric).abs();
        worst = worst.max(err);
        assert!(
            err < 1e-3,
            "KL mismatch at mu={mu}, sigma={sigma}: closed {closed}, integral {numeric}"
        );
    }
    pass(1, "kl-closed-form", &format!("200 posteriors, worst abs err {worst:.2e}"));
}

fn gradcheck_model() -> (McibModel, Dataset, NoisePlan) {
    let data_cfg = SynthConfig {
        n_samples: 4,
        dims: [8, 8, 8],
        tokens: 2,
        signal_dims: 2,
        distractor_slots: 2,
        complementarity: 0.5,
        redundancy: 0.5,
        seed: 7,
        ..SynthConfig::default()
    };
    let (dataset, _) = synth_generate(&data_cfg).unwrap();
    let mut cfg = ModelConfig::new([8, 8, 8], 2);
    cfg.latent_dim = 2;
    cfg.hidden_dim = 8;
    cfg.num_layers = 1;
    cfg.num_heads = 2;
    cfg.decoder_hidden = 8;
    cfg.encoder_variant = EncoderVariant::Transformer;
    let specs = vec![
        StreamSpec::new(0, Some(2), 2.0).unwrap(),
        StreamSpec::new(1, Some(0), 3.0).unwrap(),
        StreamSpec::new(2, Some(1), 4.0).unwrap(),
    ];
    let model = McibModel::new(cfg, &specs, 11).unwrap();
    let noise = NoisePlan::generate(dataset.len(), 3, 4, 2, 99);
    (model, dataset, noise)
}

/// Criterion 2: finite differences over every trainable parameter of the
/// full objective (three streams, transformer encoders, L = 4, frozen noise).
#[test]
fn criterion_02_gradient_integrity() {
    let (model, dataset, noise) = gradcheck_model();
    let weights = LossWeights {
        lambda: [2.0, 3.0, 4.0],
        alpha: [1.0, 0.5, 1.5],
        beta: 2.0,
    };
    let bundles: Vec<&ModalityBundle> = dataset.bundles.iter().collect();
    let params = model.store.tensors().to_vec();
    let coords: usize = params.iter().map(|t| t.len()).sum();
    let report = grad_check(&params, 1e-4, |tape, vars| {
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
    })
    .unwrap();
    assert_eq!(report.coords_checked, coords, "every parameter checked");
    assert!(
        report.max_rel_error < 1e-4,
        "max relative error {} (param {}, coord {})",
        report.max_rel_error,
        report.worst_param,
        report.worst_coord
    );
    pass(
        2,
        "gradient-integrity",
        &format!(
            "{} coordinates, max rel err {:.2e}",
            report.coords_checked, report.max_rel_error
        ),
    );
}

/// Criterion 3: the Monte-Carlo conditional log-likelihood estimator's
/// variance shrinks with L; var(L=64) < var(L=1) / 8 over 200 replicates.
#[test]
fn criterion_03_monte_carlo_estimator() {
    let (model, dataset, _) = gradcheck_model();
    let stream = &model.streams[0];
    let posterior = stream
        .encoder
        .encode_posterior(&model.store, &dataset.bundles[0].x[0])
        .unwrap();
    // A posterior with real spread so sampling matters.
    let posterior = GaussianPosterior::new(
        posterior.mu().to_vec(),
        posterior.sigma().iter().map(|s| s.max(0.8)).collect(),
    )
    .unwrap();
    let aux = &dataset.bundles[0].x[2];
    let variance_at = |l: usize| -> f64 {
        let vals: Vec<f64> = (0..200)
            .map(|rep| {
                let samples = reparameterize(&posterior, l, 50_000 + rep).unwrap();
                conditional_log_likelihood(&samples, Some(aux), 1, &stream.decoder, &model.store)
                    .unwrap()
            })
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (vals.len() - 1) as f64
    };
    let vars: Vec<(usize, f64)> = [1usize, 4, 16, 64]
        .iter()
        .map(|&l| (l, variance_at(l)))
        .collect();
    for pair in vars.windows(2) {
        assert!(
            pair[1].1 < pair[0].1,
            "variance must decrease with L: {:?}",
            vars
        );
    }
    let v1 = vars[0].1;
    let v64 = vars[3].1;
    assert!(
        v64 < v1 / 8.0,
        "var(L=64) = {v64:.3e} not below var(L=1)/8 = {:.3e}",
        v1 / 8.0
    );
    pass(
        3,
        "monte-carlo-estimator",
        &format!("var ratio v1/v64 = {:.1} (expected near 64)", v1 / v64),
    );
}

/// Criterion 4: phi coefficient rebuilt from the reported class-conditional
/// proportions (99% / 5.3%, balanced classes) reaches 0.94 within 0.005.
#[test]
fn criterion_04_phi_reproduction() {
    // 1000 per class: sarcastic 990 different / 10 same;
    // non-sarcastic 53 different / 947 same.
    let table = ContingencyTable::new(vec![vec![990, 53], vec![10, 947]]).unwrap();
    let phi = phi_coefficient(&table).unwrap();
    assert!(
        (phi - 0.94).abs() <= 0.005,
        "phi = {phi}, expected 0.94 +- 0.005"
    );
    pass(4, "phi-reproduction", &format!("phi = {phi:.4}"));
}

/// Criterion 5: chi-square anchors. The balanced table scores exactly zero
/// with p = 1; the hand-computed 2x2 scores exactly 20 with dof 1 and a
/// p-value matching the independently computed incomplete-gamma oracle.
#[test]
fn criterion_05_chi_square_oracle() {
    let balanced = ContingencyTable::new(vec![vec![10, 10], vec![10, 10]]).unwrap();
    let r = chi_square_test(&balanced).unwrap();
    assert_eq!(r.statistic, 0.0);
    assert_eq!(r.p_value, 1.0);

    let skewed = ContingencyTable::new(vec![vec![30, 10], vec![10, 30]]).unwrap();
    let r = chi_square_test(&skewed).unwrap();
    assert!((r.statistic - 20.0).abs() < 1e-12, "statistic {}", r.statistic);
    assert_eq!(r.dof, 1);
    // Frozen oracle: Q(1/2, 10) to 17 digits, computed ahead of the build.
    let oracle = 7.7442164310440836e-6;
    let rel = ((r.p_value - oracle) / oracle).abs();
    assert!(rel < 1e-8, "p = {}, oracle {oracle}, rel err {rel}", r.p_value);
    pass(
        5,
        "chi-square-oracle",
        &format!("stat 20 exactly, p rel err {rel:.2e}"),
    );
}

fn desk_model_config(dims: [usize; 3]) -> ModelConfig {
    let mut cfg = ModelConfig::new(dims, 2);
    cfg.latent_dim = 8;
    cfg.hidden_dim = 32;
    cfg.num_layers = 1;
    cfg.num_heads = 2;
    cfg.decoder_hidden = 32;
    cfg.encoder_variant = EncoderVariant::Transformer;
    cfg
}

fn desk_train_config(dims: [usize; 3], streams: Vec<StreamSpec>, seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig::new(desk_model_config(dims), streams);
    cfg.epochs = 60;
    cfg.batch_size = 32;
    cfg.mc_samples = 4;
    cfg.patience = 10;
    cfg.seed = seed;
    cfg
}

fn triple_streams(lambda: f64) -> Vec<StreamSpec> {
    vec![
        StreamSpec::new(0, Some(2), lambda).unwrap(),
        StreamSpec::new(1, Some(0), lambda).unwrap(),
        StreamSpec::new(2, Some(1), lambda).unwrap(),
    ]
}

fn mean_accuracy_over_seeds(
    train_set: &Dataset,
    val_set: &Dataset,
    test_set: &Dataset,
    dims: [usize; 3],
    streams: Vec<StreamSpec>,
    seeds: &[u64],
) -> f64 {
    let accs: Vec<f64> = seeds
        .par_iter()
        .map(|&seed| {
            let cfg = desk_train_config(dims, streams.clone(), seed);
            let out = train(train_set, Some(val_set), &cfg).unwrap();
            evaluate(&out.model, test_set).unwrap().accuracy
        })
        .collect();
    accs.iter().sum::<f64>() / accs.len() as f64
}

/// Criterion 6: on a complementary task (c = 0.6, r = 0.3, n = 2000) the
/// full three-stream model beats the best single-modality model by at least
/// five points and lands within ten points of the fused Bayes accuracy.
#[test]
fn criterion_06_synthetic_fusion_separation() {
    let data_cfg = SynthConfig {
        n_samples: 2000,
        complementarity: 0.6,
        redundancy: 0.3,
        seed: 42,
        ..SynthConfig::default()
    };
    let (dataset, bayes) = synth_generate(&data_cfg).unwrap();
    let (train_set, val_set, test_set) = split_stratified(&dataset, (0.7, 0.1, 0.2), 42).unwrap();
    let seeds = [1u64, 2, 3, 4, 5];
    let dims = data_cfg.dims;

    let full = mean_accuracy_over_seeds(
        &train_set,
        &val_set,
        &test_set,
        dims,
        triple_streams(4.0),
        &seeds,
    );
    let mut best_single = f64::NEG_INFINITY;
    for m in 0..3 {
        let acc = mean_accuracy_over_seeds(
            &train_set,
            &val_set,
            &test_set,
            dims,
            vec![StreamSpec::new(m, None, 4.0).unwrap()],
            &seeds,
        );
        best_single = best_single.max(acc);
    }
    assert!(
        full >= best_single + 0.05,
        "full {full:.4} must beat best single {best_single:.4} by 5 points"
    );
    assert!(
        full >= bayes.fused - 0.10,
        "full {full:.4} must reach within 10 points of fused Bayes {:.4}",
        bayes.fused
    );
    pass(
        6,
        "synthetic-fusion-separation",
        &format!(
            "full {full:.4}, best single {best_single:.4}, fused Bayes {:.4}",
            bayes.fused
        ),
    );
}

/// Criterion 7: with pure-distractor auxiliaries (c = 0, r = 0.8) the full
/// model gives up at most two points against the primary-only model.
#[test]
fn criterion_07_redundancy_robustness() {
    let data_cfg = SynthConfig {
        n_samples: 2000,
        complementarity: 0.0,
        redundancy: 0.8,
        seed: 43,
        ..SynthConfig::default()
    };
    let (dataset, _) = synth_generate(&data_cfg).unwrap();
    let (train_set, val_set, test_set) = split_stratified(&dataset, (0.7, 0.1, 0.2), 43).unwrap();
    let seeds = [1u64, 2, 3, 4, 5];
    let dims = data_cfg.dims;

    let full = mean_accuracy_over_seeds(
        &train_set,
        &val_set,
        &test_set,
        dims,
        triple_streams(4.0),
        &seeds,
    );
    let primary_only = mean_accuracy_over_seeds(
        &train_set,
        &val_set,
        &test_set,
        dims,
        vec![StreamSpec::new(0, None, 4.0).unwrap()],
        &seeds,
    );
    assert!(
        full >= primary_only - 0.02,
        "full {full:.4} degraded more than 2 points vs primary-only {primary_only:.4}"
    );
    pass(
        7,
        "redundancy-robustness",
        &format!("full {full:.4} vs primary-only {primary_only:.4}"),
    );
}

/// Criterion 9: only_B - only_A is identically accuracy(B) - accuracy(A),
/// verified exactly on integer counts for 1000 random triples.
#[test]
fn criterion_09_venn_identity() {
    use rand::Rng;
    let mut rng = mcib::rng::rng_from(909);
    for case in 0..1000 {
        let n = rng.gen_range(1..200usize);
        let classes = rng.gen_range(2..5usize);
        let truth: Vec<usize> = (0..n).map(|_| rng.gen_range(0..classes)).collect();
        let a: Vec<usize> = (0..n).map(|_| rng.gen_range(0..classes)).collect();
        let b: Vec<usize> = (0..n).map(|_| rng.gen_range(0..classes)).collect();
        let v = analysis::venn_regions(&a, &b, &truth).unwrap();

        // Brute-force integer counts: the identity is exact on counts.
        let mut count_only_a = 0i64;
        let mut count_only_b = 0i64;
        let mut correct_a = 0i64;
        let mut correct_b = 0i64;
        for i in 0..n {
            let ca = a[i] == truth[i];
            let cb = b[i] == truth[i];
            correct_a += ca as i64;
            correct_b += cb as i64;
            count_only_a += (ca && !cb) as i64;
            count_only_b += (cb && !ca) as i64;
        }
        assert_eq!(
            count_only_b - count_only_a,
            correct_b - correct_a,
            "case {case}: exact count identity"
        );
        // And the emitted fractions agree with those counts.
        assert_eq!(v.only_a, count_only_a as f64 / n as f64, "case {case}");
        assert_eq!(v.only_b, count_only_b as f64 / n as f64, "case {case}");
        let float_gap = (v.only_b - v.only_a) - (correct_b - correct_a) as f64 / n as f64;
        assert!(float_gap.abs() < 1e-12, "case {case}: float identity");
    }
    pass(9, "venn-identity", "1000 random triples, exact on counts");
}

/// Criterion 10: structural reductions. A single-modality run is a plain
/// information bottleneck and a pair run is exactly the conditional
/// bottleneck objective; both checked by loss equality against straight-line
/// reimplementations on a fixed batch.
#[test]
fn criterion_10_structural_reductions() {
    let data_cfg = SynthConfig {
        n_samples: 6,
        dims: [8, 8, 8],
        tokens: 1,
        signal_dims: 2,
        distractor_slots: 2,
        complementarity: 0.4,
        seed: 17,
        ..SynthConfig::default()
    };
    let (dataset, _) = synth_generate(&data_cfg).unwrap();
    let bundles: Vec<&ModalityBundle> = dataset.bundles.iter().collect();

    let mut cfg = ModelConfig::new([8, 8, 8], 2);
    cfg.latent_dim = 3;
    cfg.hidden_dim = 8;
    cfg.num_layers = 1;
    cfg.num_heads = 2;
    cfg.decoder_hidden = 8;
    cfg.encoder_variant = EncoderVariant::Mlp;

    // Straight-line helpers used only in this test.
    let log_softmax_row = |logits: &[f64], y: usize| -> f64 {
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_sum = logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
        logits[y] - log_sum
    };
    let affine_row = |store: &mcib::params::ParamStore,
                      layer: &mcib::params::AffineParams,
                      x: &[f64]|
     -> Vec<f64> {
        let w = store.get(layer.w);
        let b = store.get(layer.b);
        (0..w.cols())
            .map(|c| {
                b.get(0, c)
                    + x.iter()
                        .enumerate()
                        .map(|(r, &v)| v * w.get(r, c))
                        .sum::<f64>()
            })
            .collect()
    };

    for (label, spec, lambda) in [
        ("single (plain bottleneck)", StreamSpec::new(0, None, 3.0).unwrap(), 3.0),
        ("pair (conditional bottleneck)", StreamSpec::new(1, Some(0), 2.0).unwrap(), 2.0),
    ] {
        let model = McibModel::new(cfg.clone(), &[spec], 21).unwrap();
        let weights = LossWeights {
            lambda: [lambda, 0.0, 0.0],
            alpha: [1.0, 0.0, 0.0],
            beta: 0.5,
        };
        let l_samples = 2;
        let noise = NoisePlan::generate(bundles.len(), 1, l_samples, 3, 5);
        let mut tape = mcib::diff::Tape::new();
        let tp = model.store.bind(&mut tape);
        let harness = batch_loss(
            &mut tape,
            &model,
            &tp,
            &bundles,
            &weights,
            PairingMode::Cross,
            &noise,
        )
        .unwrap();

        // Straight-line reimplementation: KL + lambda * mean NLL + beta * CE.
        let stream = &model.streams[0];
        let mut kl_sum = 0.0;
        let mut nll_sum = 0.0;
        let mut ce_sum = 0.0;
        for (i, bundle) in bundles.iter().enumerate() {
            let p = stream
                .encoder
                .encode_posterior(&model.store, &bundle.x[stream.spec.primary])
                .unwrap();
            kl_sum += p
                .mu()
                .iter()
                .zip(p.sigma())
                .map(|(&m, &s)| 0.5 * (s * s + m * m - 1.0 - (s * s).ln()))
                .sum::<f64>();
            let mut sample_ll = 0.0;
            for l in 0..l_samples {
                let eps = noise.get(i, 0, l);
                let b: Vec<f64> = p
                    .mu()
                    .iter()
                    .zip(p.sigma())
                    .zip(eps.data())
                    .map(|((&m, &s), &e)| m + s * e)
                    .collect();
                // Decoder: [b ; pooled aux] -> hidden -> tanh -> logits.
                let mut input = b;
                if let Some(a) = stream.spec.auxiliary {
                    let aux = &bundle.x[a];
                    for c in 0..aux.cols() {
                        let mean =
                            (0..aux.rows()).map(|r| aux.get(r, c)).sum::<f64>() / aux.rows() as f64;
                        input.push(mean);
                    }
                }
                let hidden = affine_row(&model.store, stream.decoder.hidden_layer(), &input);
                let hidden: Vec<f64> = hidden.iter().map(|v| v.tanh()).collect();
                let logits = affine_row(&model.store, stream.decoder.out_head(), &hidden);
                sample_ll += log_softmax_row(&logits, bundle.y);
            }
            nll_sum += -sample_ll / l_samples as f64;

            // Prediction head on the posterior mean.
            let logits = affine_row(&model.store, &model.head, p.mu());
            ce_sum += -log_softmax_row(&logits, bundle.y);
        }
        let n = bundles.len() as f64;
        let expect = (kl_sum / n + lambda * (nll_sum / n)) + 0.5 * (ce_sum / n);
        assert!(
            (harness.total_value - expect).abs() < 1e-10,
            "{label}: harness {} vs straight-line {expect}",
            harness.total_value
        );
    }
    pass(
        10,
        "structural-reductions",
        "single and pair losses equal straight-line recomputation",
    );
}
