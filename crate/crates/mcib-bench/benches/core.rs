use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use mcib::audit::{chi_square_test, ContingencyTable};
use mcib::cib::{batch_loss, kl_to_standard_normal, LossWeights, NoisePlan, PairingMode, StreamSpec};
use mcib::data::{synth_generate, SynthConfig};
use mcib::diff::Tape;
use mcib::encoder::{EncoderVariant, GaussianPosterior};
use mcib::model::{McibModel, ModelConfig};
use mcib::ModalityBundle;

fn desk_model() -> (McibModel, Vec<ModalityBundle>, NoisePlan) {
    let data_cfg = SynthConfig {
        n_samples: 32,
        complementarity: 0.5,
        redundancy: 0.3,
        seed: 1,
        ..SynthConfig::default()
    };
    let (dataset, _) = synth_generate(&data_cfg).unwrap();
    let mut cfg = ModelConfig::new(data_cfg.dims, 2);
    cfg.latent_dim = 8;
    cfg.hidden_dim = 32;
    cfg.num_layers = 1;
    cfg.num_heads = 2;
    cfg.decoder_hidden = 32;
    cfg.encoder_variant = EncoderVariant::Transformer;
    let specs = vec![
        StreamSpec::new(0, Some(2), 4.0).unwrap(),
        StreamSpec::new(1, Some(0), 4.0).unwrap(),
        StreamSpec::new(2, Some(1), 4.0).unwrap(),
    ];
    let model = McibModel::new(cfg, &specs, 7).unwrap();
    let noise = NoisePlan::generate(dataset.len(), 3, 4, 8, 3);
    (model, dataset.bundles, noise)
}

fn bench_batch_loss(c: &mut Criterion) {
    let (model, bundles, noise) = desk_model();
    let refs: Vec<&ModalityBundle> = bundles.iter().collect();
    let weights = LossWeights::default();
    c.bench_function("batch32_forward", |b| {
        b.iter(|| {
            let mut tape = Tape::new();
            let tp = model.store.bind(&mut tape);
            batch_loss(
                &mut tape,
                &model,
                &tp,
                &refs,
                &weights,
                PairingMode::Cross,
                &noise,
            )
            .unwrap()
            .total_value
        })
    });
    c.bench_function("batch32_forward_backward", |b| {
        b.iter(|| {
            let mut tape = Tape::new();
            let tp = model.store.bind(&mut tape);
            let loss = batch_loss(
                &mut tape,
                &model,
                &tp,
                &refs,
                &weights,
                PairingMode::Cross,
                &noise,
            )
            .unwrap();
            tape.backward(loss.total).unwrap()
        })
    });
}

fn bench_kl(c: &mut Criterion) {
    let posterior =
        GaussianPosterior::new(vec![0.3; 64], vec![0.8; 64]).unwrap();
    c.bench_function("kl_closed_form_d64", |b| {
        b.iter(|| kl_to_standard_normal(&posterior))
    });
}

fn bench_chi_square(c: &mut Criterion) {
    let counts: Vec<Vec<u64>> = (0..20)
        .map(|r| vec![10 + r as u64 * 3, 40 - r as u64])
        .collect();
    let table = ContingencyTable::new(counts).unwrap();
    c.bench_function("chi_square_20x2", |b| {
        b.iter(|| chi_square_test(&table).unwrap())
    });
}

fn bench_synth(c: &mut Criterion) {
    let cfg = SynthConfig {
        n_samples: 1000,
        complementarity: 0.6,
        redundancy: 0.3,
        ..SynthConfig::default()
    };
    c.bench_function("synth_generate_1k", |b| {
        b.iter_batched(
            || cfg.clone(),
            |cfg| synth_generate(&cfg).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, bench_batch_loss, bench_kl, bench_chi_square, bench_synth);
criterion_main!(benches);
