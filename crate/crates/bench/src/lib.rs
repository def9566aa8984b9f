//! Fixtures shared by the benchmarks.

use acgan_core::conditioning::{extract_conditions, ExtractionConfig, GradientEdges};
use acgan_core::synth::synthetic_portrait;
use acgan_core::trainer::TrainSample;

pub fn samples(n: u64, size: usize) -> Vec<TrainSample> {
    (0..n)
        .map(|seed| {
            let (image, seg) = synthetic_portrait(seed, size);
            let cond = extract_conditions(&image, &seg, &GradientEdges::default(), &ExtractionConfig::default())
                .expect("synthetic portraits extract");
            TrainSample { id: format!("bench{seed}"), image, cond }
        })
        .collect()
}
