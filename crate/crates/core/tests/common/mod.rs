#![allow(dead_code)]

pub mod grads;
pub mod oracles;
pub mod physics;

use nfsense_core::model::{HarModel, ModelDims};
use nfsense_core::preprocess::{ModelInput, PAD_VALUE};
use nfsense_core::rng::Rng;
use rand::Rng as _;

pub fn small_dims(input: usize) -> ModelDims {
    ModelDims {
        input,
        encoder: 9,
        decoder: 6,
        hidden: 5,
        feature: 4,
        classes: 10,
    }
}

pub fn random_input(rng: &mut Rng, s: usize, valid: usize, pad: usize, label: u8) -> ModelInput {
    let mut data: Vec<f64> = (0..valid * s).map(|_| rng.gen_range(-1.0..1.0)).collect();
    data.resize(pad * s, PAD_VALUE);
    ModelInput {
        data,
        pad_len: pad,
        n_features: s,
        valid_len: valid,
        label,
        subject: 0,
        environment: 0,
        sample_id: 0,
    }
}

pub fn random_batch(rng: &mut Rng, s: usize, n: usize, pad: usize, classes: &[u8]) -> Vec<ModelInput> {
    (0..n)
        .map(|i| {
            let v = rng.gen_range(1..=pad);
            random_input(rng, s, v, pad, classes[i % classes.len()])
        })
        .collect()
}

pub fn small_model(seed: u64, input: usize) -> HarModel {
    HarModel::init(small_dims(input), &mut nfsense_core::rng::rng(seed))
}
