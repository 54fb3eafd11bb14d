//! Ten-frame clips for the sequence model.

use crate::error::{Error, Result};
use crate::model::CLIP_LEN;

use super::manifest::Sample;

/// Consecutive frames of one video. Its labels are those of the last frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Clip {
    samples: Vec<Sample>,
}

impl Clip {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        let Some(first) = samples.first() else {
            return Err(Error::Invalid("empty clip".into()));
        };
        let ok = samples.windows(2).all(|w| w[1].video == first.video && w[1].frame == w[0].frame + 1);
        if !ok {
            return Err(Error::Invalid(format!("clip frames of `{}` are not consecutive", first.video)));
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn video(&self) -> &str {
        &self.samples[0].video
    }

    pub fn label(&self) -> &Sample {
        self.samples.last().expect("clips are non-empty")
    }
}

/// Cut runs of consecutive frames into non-overlapping windows.
///
/// Augmented samples are ignored. Input order does not matter: samples are
/// sorted by (video, frame) first. Leftover frames at the end of a run are dropped.
pub fn window_sequences(samples: &[Sample], length: usize, stride: usize) -> Result<Vec<Clip>> {
    if length == 0 || stride == 0 {
        return Err(Error::Invalid("window length and stride must be positive".into()));
    }
    let mut sorted: Vec<&Sample> = samples.iter().filter(|s| !s.is_augmented()).collect();
    sorted.sort_by(|a, b| (&a.video, a.frame).cmp(&(&b.video, b.frame)));
    let mut clips = Vec::new();
    let mut start = 0;
    while start < sorted.len() {
        let mut end = start + 1;
        while end < sorted.len() && sorted[end].video == sorted[start].video && sorted[end].frame == sorted[end - 1].frame + 1 {
            end += 1;
        }
        let mut at = start;
        while at + length <= end {
            clips.push(Clip { samples: sorted[at..at + length].iter().map(|&s| s.clone()).collect() });
            at += stride;
        }
        start = end;
    }
    Ok(clips)
}

/// [`window_sequences`] with the model's clip length as both length and stride.
pub fn clips(samples: &[Sample]) -> Vec<Clip> {
    window_sequences(samples, CLIP_LEN, CLIP_LEN).expect("positive window")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn frames(video: &str, range: impl Iterator<Item = u64>) -> Vec<Sample> {
        range.map(|f| Sample::new(format!("{video}/{f}.ppm"), video, f, f as f32 / 100.0, 0.0, Some(0))).collect()
    }

    fn spans(clips: &[Clip]) -> Vec<(u64, u64)> {
        clips.iter().map(|c| (c.samples()[0].frame, c.label().frame)).collect()
    }

    #[test]
    fn twenty_five_frames() {
        assert_eq!(spans(&clips(&frames("a", 0..25))), vec![(0, 9), (10, 19)]);
    }

    #[test]
    fn nine_frames() {
        assert!(clips(&frames("a", 0..9)).is_empty());
    }

    #[test]
    fn gap_splits_runs() {
        let mut s = frames("a", 0..10);
        s.extend(frames("a", 11..21));
        assert_eq!(spans(&clips(&s)), vec![(0, 9), (11, 20)]);
    }

    #[test]
    fn label_from_last_frame() {
        let c = &clips(&frames("a", 0..10))[0];
        assert_eq!(c.label().valence, 0.09);
    }

    proptest! {
        #[test]
        fn clips_are_consecutive_and_single_video(
            raw in proptest::collection::vec((0u8..3, 0u64..60), 0..120),
        ) {
            let mut seen = std::collections::HashSet::new();
            let samples: Vec<Sample> = raw.into_iter()
                .filter(|k| seen.insert(*k))
                .map(|(v, f)| Sample::new("x", format!("v{v}"), f, 0.0, 0.0, None))
                .collect();
            let out = clips(&samples);
            for c in &out {
                prop_assert_eq!(c.len(), CLIP_LEN);
                prop_assert!(Clip::new(c.samples().to_vec()).is_ok());
            }
            let mut reversed = samples.clone();
            reversed.reverse();
            prop_assert_eq!(clips(&reversed), out);
        }
    }
}
