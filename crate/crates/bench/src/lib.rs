//! Shared fixtures for the benchmarks.

use fckit::Tensor;

/// A deterministic batch of `[batch,120,120,3]` inputs with values in [0,1].
pub fn frames(batch: usize) -> Tensor {
    Tensor::from_fn(&[batch, 120, 120, 3], |i| ((i * 2_654_435_761) % 1000) as f32 / 1000.0)
}
