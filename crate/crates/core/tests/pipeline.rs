//! Manifests and images on disk through to model inputs.

mod common;

use std::path::Path;

use fckit::data::{
    clips, filter_coherence, load_clips, load_frames, parse_manifest, write_image, write_manifest, FilterThresholds,
    Recipe, Sample,
};
use fckit::error::{DataError, ImageError};
use fckit::{Error, ErrorKind, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn write_frames(dir: &Path, video: &str, frames: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(frames);
    std::fs::create_dir_all(dir.join(video)).unwrap();
    (0..frames)
        .map(|f| {
            let rel = format!("{video}/{f:04}.ppm");
            write_image(&dir.join(&rel), &common::pattern_image((f % 7) as usize, &mut rng)).unwrap();
            Sample::new(rel, video, f, 0.1 * (f % 5) as f32, -0.2, Some((f % 7) as usize))
        })
        .collect()
}

#[test]
fn relative_paths_resolve_against_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let samples = write_frames(dir.path(), "v1", 3);
    let manifest = dir.path().join("train.csv");
    write_manifest(&manifest, &samples).unwrap();
    let parsed = parse_manifest(&manifest).unwrap();
    let examples = load_frames(&parsed, manifest.parent().unwrap()).unwrap();
    assert_eq!(examples.len(), 3);
    assert_eq!(examples[2].input.shape(), [120, 120, 3]);
    assert_eq!(examples[2].labels.expression, Some(2));
    assert_eq!(examples[1].labels.valence, Some(0.1));
}

#[test]
fn augmented_rows_load_transformed_images() {
    let dir = tempfile::tempdir().unwrap();
    let mut samples = write_frames(dir.path(), "v1", 1);
    let flip = Recipe { flip: true, ..Recipe::IDENTITY };
    samples.push(samples[0].augmented(0, flip));
    let examples = load_frames(&samples, dir.path()).unwrap();
    let (a, b) = (&examples[0].input, &examples[1].input);
    for (y, x, c) in [(0, 0, 0), (17, 3, 2), (119, 60, 1)] {
        assert_eq!(a.at(&[y, x, c]), b.at(&[y, 119 - x, c]));
    }
}

#[test]
fn clips_decode_to_ten_frames() {
    let dir = tempfile::tempdir().unwrap();
    let mut samples = write_frames(dir.path(), "a", 25);
    samples.extend(write_frames(dir.path(), "b", 12));
    let windows = clips(&samples);
    assert_eq!(windows.len(), 3);
    let examples = load_clips(&windows, dir.path()).unwrap();
    assert_eq!(examples[0].input.shape(), [10, 120, 120, 3]);
    // Labels come from the last frame of each window.
    assert_eq!(examples[1].labels.expression, Some(19 % 7));
    assert_eq!(examples[2].labels.expression, Some(9 % 7));
}

#[test]
fn missing_image_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let samples = vec![Sample::new("absent.ppm", "v", 0, 0.0, 0.0, None)];
    let err = load_frames(&samples, dir.path()).unwrap_err();
    assert!(matches!(err, Error::Image(ImageError::Io { .. })));
    assert_eq!(err.kind(), ErrorKind::Io);
}

#[test]
fn corrupt_image_reports_its_cause() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.ppm"), b"P6\n100 100\n255\n").unwrap();
    std::fs::write(dir.path().join("short.f32"), [0u8; 64]).unwrap();
    let load = |name: &str| load_frames(&[Sample::new(name, "v", 0, 0.0, 0.0, None)], dir.path()).unwrap_err();
    assert!(matches!(load("bad.ppm"), Error::Image(ImageError::Dimensions { width: 100, height: 100 })));
    assert!(matches!(load("short.f32"), Error::Image(ImageError::Short { expected: 172_800, found: 64 })));
}

#[test]
fn filtered_manifest_round_trips_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    write_manifest(&path, &common::filter_fixture()).unwrap();
    let (kept, report) = filter_coherence(&parse_manifest(&path).unwrap(), &FilterThresholds::default());
    assert_eq!(report.kept, 1);
    write_manifest(&path, &kept).unwrap();
    assert_eq!(parse_manifest(&path).unwrap(), kept);
}

#[test]
fn duplicate_rows_are_rejected_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dup.csv");
    std::fs::write(&path, "path,video,frame,valence,arousal,expression\na.ppm,v1,0,0.5,-0.2,4\nb.ppm,v1,0,0.1,0.1,\n").unwrap();
    let err = parse_manifest(&path).unwrap_err();
    assert!(matches!(err, Error::Data(DataError::Duplicate { first_line: 2, second_line: 3, .. })));
    assert!(err.to_string().contains("lines 2 and 3"));
}

#[test]
fn stack_of_loaded_frames_feeds_the_model() {
    let dir = tempfile::tempdir().unwrap();
    let samples = write_frames(dir.path(), "v", 2);
    let examples = load_frames(&samples, dir.path()).unwrap();
    let batch = Tensor::stack(&examples.iter().map(|e| e.input.clone()).collect::<Vec<_>>()).unwrap();
    let model = fckit::model::build_facechannel(7, 0).unwrap();
    let out = model.forward(&batch).unwrap();
    assert_eq!(out.expression.shape(), [2, 7]);
    assert!(out.arousal.data().iter().all(|v| (-1.0..=1.0).contains(v)));
}
