//! Synthetic fixtures shared by the integration tests.
#![allow(dead_code)]

use fckit::data::Sample;
use fckit::train::{Example, Labels};
use fckit::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SIDE: usize = 120;

/// Stripe pattern whose period depends on `class`, plus uniform noise.
pub fn pattern_image(class: usize, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(&[SIDE, SIDE, 3], |k| {
        let (y, x, ch) = (k / (SIDE * 3), (k / 3) % SIDE, k % 3);
        let stripe = if ((y / (8 + 4 * class)) + (x / 16) + ch) % 2 == 0 { 0.8 } else { 0.2 };
        stripe * 0.8 + rng.gen::<f32>() * 0.2
    })
}

/// Arousal and valence as a fixed function of the class.
pub fn class_labels(class: usize) -> Labels {
    let arousal = (class as f32 / 3.0 - 1.0) * 0.8;
    Labels::full(arousal, -0.5 * arousal, class)
}

/// `n` frames cycling through `classes` classes.
pub fn synthetic_frames(n: usize, classes: usize, seed: u64) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let class = i % classes;
            Example { input: pattern_image(class, &mut rng), labels: class_labels(class) }
        })
        .collect()
}

/// `n` ten-frame clips; each clip shows one class throughout.
pub fn synthetic_clips(n: usize, classes: usize, seed: u64) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let class = i % classes;
            let frames: Vec<Tensor> = (0..10).map(|_| pattern_image(class, &mut rng)).collect();
            Example { input: Tensor::stack(&frames).unwrap(), labels: class_labels(class) }
        })
        .collect()
}

/// The four-rule filter fixture plus one coherent sample.
///
/// Index 0: Happiness with negative valence. 1: Sadness with positive valence.
/// 2: out-of-range valence. 3: extreme Neutral. 4: coherent.
pub fn filter_fixture() -> Vec<Sample> {
    vec![
        Sample::new("happy.ppm", "v1", 0, -0.3, 0.1, Some(4)),
        Sample::new("sad.ppm", "v1", 1, 0.2, 0.1, Some(5)),
        Sample::new("range.ppm", "v1", 2, -5.0, 0.1, Some(2)),
        Sample::new("neutral.ppm", "v1", 3, 0.6, 0.7, Some(0)),
        Sample::new("ok.ppm", "v1", 4, 0.4, 0.2, Some(4)),
    ]
}
