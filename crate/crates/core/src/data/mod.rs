//! Manifests, filtering, balancing, augmentation, windowing and image decoding.

mod augment;
mod balance;
mod filter;
mod image;
mod manifest;
mod stats;
mod window;

use std::path::Path;

use rayon::prelude::*;

pub use augment::{augment, Recipe, BRIGHTNESS_RANGE, CROP_SIZE, MAX_ROTATION_DEG};
pub use balance::{apply_balance, balance_categorical, balance_dimensional, bin_center, bin_valence, Balance, VALENCE_BINS};
pub use filter::{filter_coherence, FilterReport, FilterRule, FilterThresholds};
pub use image::{decode_image, decode_ppm, decode_raw, encode_ppm, encode_raw, write_image, IMAGE_LEN};
pub use manifest::{manifest_to_string, parse_manifest, parse_manifest_str, write_manifest, Augmentation, Sample, AUGMENT_COLUMN, COLUMNS};
pub use stats::{stats, DistributionReport};
pub use window::{clips, window_sequences, Clip};

use crate::error::Result;
use crate::tensor::Tensor;
use crate::train::{Example, Labels};

impl Sample {
    pub fn labels(&self) -> Labels {
        Labels { arousal: Some(self.arousal), valence: Some(self.valence), expression: self.expression }
    }

    /// Decode the image (relative paths resolve against `base`) and apply any augmentation.
    pub fn load(&self, base: &Path) -> Result<Tensor> {
        let image = decode_image(&base.join(&self.path))?;
        match &self.augmentation {
            Some(a) => augment(&image, &a.recipe),
            None => Ok(image),
        }
    }
}

/// Decode frames in parallel; the output keeps input order.
pub fn load_frames(samples: &[Sample], base: &Path) -> Result<Vec<Example>> {
    samples.par_iter().map(|s| Ok(Example { input: s.load(base)?, labels: s.labels() })).collect()
}

/// Decode clips into `[10,120,120,3]` inputs labelled by their last frame.
pub fn load_clips(clips: &[Clip], base: &Path) -> Result<Vec<Example>> {
    clips
        .par_iter()
        .map(|c| {
            let frames = c.samples().iter().map(|s| s.load(base)).collect::<Result<Vec<_>>>()?;
            Ok(Example { input: Tensor::stack(&frames)?, labels: c.label().labels() })
        })
        .collect()
}

/// Directory that relative manifest paths are resolved against.
pub fn manifest_dir(manifest: &Path) -> &Path {
    manifest.parent().unwrap_or(Path::new("."))
}
