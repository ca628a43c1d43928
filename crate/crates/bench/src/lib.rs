//! Shared fixtures for the benchmarks.

use logan_core::{
    FeatureMap, GeneratorModel, LatentCode, PriorityAssignment, RegionMask, ToyConfig,
};

pub fn toy() -> GeneratorModel {
    GeneratorModel::toy(&ToyConfig::with_seed(7)).expect("toy model builds")
}

/// Deterministic non-constant features entering `layer`.
pub fn features(model: &GeneratorModel, layer: usize) -> FeatureMap {
    model
        .synthesize_features(&model.sample_codes(1), layer)
        .expect("valid layer")
}

pub fn code(model: &GeneratorModel, layer: usize, seed: u64) -> LatentCode {
    model.sample_codes(seed)[layer - 1].clone()
}

/// `n` overlapping rectangles at `size x size` with distinct priorities.
pub fn ranked_masks(n: usize, size: usize) -> Vec<(RegionMask, PriorityAssignment)> {
    (0..n)
        .map(|i| {
            let off = i * size / (2 * n.max(1));
            let m = RegionMask::rect(size, size, off, off, off + size / 2, off + size / 2);
            (m, PriorityAssignment::new(format!("o{i}"), i as u32 + 1))
        })
        .collect()
}
