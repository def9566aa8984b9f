#![allow(dead_code)]

use acgan_core::conditioning::{extract_conditions, ExtractionConfig, GradientEdges};
use acgan_core::net::{DiscriminatorSpec, GeneratorSpec, NetSpec};
use acgan_core::synth::synthetic_portrait;
use acgan_core::trainer::{TrainConfig, TrainSample};

pub fn sample(seed: u64, size: usize) -> TrainSample {
    let (image, seg) = synthetic_portrait(seed, size);
    let cond = extract_conditions(&image, &seg, &GradientEdges::default(), &ExtractionConfig::default()).unwrap();
    TrainSample { id: format!("synth{seed:03}"), image, cond }
}

pub fn samples(n: usize, size: usize) -> Vec<TrainSample> {
    (0..n as u64).map(|s| sample(s, size)).collect()
}

pub fn tiny_spec(resolution: usize) -> NetSpec {
    NetSpec {
        generator: GeneratorSpec { base_width: 4, residual_blocks: 2, resolution, ..Default::default() },
        discriminator: DiscriminatorSpec { layers: 2, base_width: 4, scales: 2 },
        ..Default::default()
    }
}

/// A fast configuration for 16×16 fixtures.
pub fn tiny_config() -> TrainConfig {
    let mut cfg = TrainConfig::default();
    cfg.resolution = 16;
    cfg.batch_size = 2;
    cfg.epochs = 4;
    cfg.lr_constant_epochs = 2;
    cfg.net = tiny_spec(16);
    cfg.loss_weights.lambda_fm_layers = acgan_core::objectives::geometric_weights(2);
    cfg
}
