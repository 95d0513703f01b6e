use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};

use nfsense_core::channel_sim::{generate_population, CsiSample, PopulationConfig, RadioConfig};
use nfsense_core::infer_eval::{predict, CompositeParams, Predictor};
use nfsense_core::model::{HarModel, ModelDims};
use nfsense_core::numerics::Tape;
use nfsense_core::preprocess::{assemble_dataset, assemble_input, pad_len, EmbedParams, ModelInput};
use nfsense_core::rng::rng;
use nfsense_core::train::{compute_anchors, pt_loss, LossWeights};

fn population(reps: usize) -> PopulationConfig {
    PopulationConfig {
        n_subjects: 1,
        reps_per_activity: reps,
        radio: RadioConfig {
            n_subcarriers: 8,
            ..RadioConfig::default()
        },
        ..PopulationConfig::default()
    }
}

fn inputs() -> (Vec<CsiSample>, Vec<ModelInput>) {
    let samples = generate_population(&population(7)).unwrap();
    let pad = pad_len(&samples).unwrap();
    let inputs = assemble_dataset(&samples, &EmbedParams::default(), pad).unwrap();
    (samples, inputs)
}

fn bench(c: &mut Criterion) {
    c.bench_function("simulate 10 samples", |b| {
        b.iter(|| generate_population(black_box(&population(1))).unwrap())
    });

    let (samples, inputs) = inputs();
    let params = EmbedParams::default();
    let pad = inputs[0].pad_len;
    c.bench_function("assemble one input", |b| {
        b.iter(|| assemble_input(black_box(&samples[0]), &params, pad).unwrap())
    });

    let model = HarModel::init(ModelDims::new(inputs[0].n_features), &mut rng(1));
    let batch: Vec<&ModelInput> = inputs.iter().take(64).collect();
    c.bench_function("forward batch of 64", |b| b.iter(|| model.forward(black_box(&batch)).unwrap()));

    let labels: Vec<u8> = batch.iter().map(|x| x.label).collect();
    let weights = LossWeights::default();
    c.bench_function("pre-training loss and gradient, batch of 64", |b| {
        b.iter_batched(
            Tape::new,
            |mut tape| {
                let bound = model.bind(&mut tape, |_| true);
                let out = model.forward_tape(&mut tape, &bound, &batch).unwrap();
                let l = pt_loss(&mut tape, out.features, out.logits, &labels, &weights, model.dims.hidden).unwrap();
                tape.backward(l).unwrap()
            },
            BatchSize::SmallInput,
        )
    });

    let anchors = compute_anchors(&model, &batch, 32).unwrap();
    c.bench_function("composite prediction, 64 samples", |b| {
        b.iter(|| {
            predict(
                &model,
                black_box(&batch),
                Predictor::Composite {
                    anchors: &anchors,
                    params: CompositeParams::default(),
                },
                32,
            )
            .unwrap()
        })
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = bench
}
criterion_main!(benches);
