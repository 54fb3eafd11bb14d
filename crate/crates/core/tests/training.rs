//! The training loop end to end: logs, checkpoints, errors and determinism.

mod common;

use fckit::error::TrainError;
use fckit::model::{build_facechannel, build_facechannels, SequenceWiring, TrunkMode, Variant};
use fckit::train::{self, Checkpoint, TaskMask, TrainConfig, Trainer, LOG_HEADER, VAL_LOG_HEADER};
use fckit::{Error, ErrorKind};

fn small_config(epochs: usize) -> TrainConfig {
    TrainConfig { batch_size: 3, micro_batch: 2, epochs, ..TrainConfig::default() }
}

#[test]
fn same_seed_gives_identical_logs_and_weights() {
    let data = common::synthetic_frames(5, 7, 11);
    let val = common::synthetic_frames(3, 7, 12);
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        train::train(&small_config(2), None, &data, &val, Some(dir.path())).unwrap();
        let read = |name: &str| std::fs::read(dir.path().join(name)).unwrap();
        (read("train_log.csv"), read("val_log.csv"), read("last.fcw"), read("best.fcw"), read("last.opt.fcw"))
    };
    assert_eq!(run(), run());
}

#[test]
fn logs_are_machine_parseable() {
    let data = common::synthetic_frames(5, 7, 13);
    let dir = tempfile::tempdir().unwrap();
    let outcome = train::train(&small_config(2), None, &data, &data[..2], Some(dir.path())).unwrap();
    let log = std::fs::read_to_string(dir.path().join("train_log.csv")).unwrap();
    let mut lines = log.lines();
    assert_eq!(lines.next(), Some(LOG_HEADER));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|f| f.parse().unwrap()).collect()).collect();
    // Five samples in batches of three: two steps per epoch.
    assert_eq!(rows.len(), 4);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r.len(), 6);
        assert_eq!((r[0], r[1]), ((i / 2 + 1) as f64, (i % 2 + 1) as f64));
        assert!((r[2] - (r[3] + r[4] + r[5])).abs() < 1e-5, "total is the sum of components: {r:?}");
    }
    let val = std::fs::read_to_string(dir.path().join("val_log.csv")).unwrap();
    assert_eq!(val.lines().next(), Some(VAL_LOG_HEADER));
    assert_eq!(val.lines().count(), 3);
    let best = outcome.best.unwrap();
    let lowest = outcome.validation.iter().map(|v| v.loss).fold(f64::INFINITY, f64::min);
    assert_eq!(best.best_val, Some(lowest));
    assert_eq!(Checkpoint::load(&dir.path().join("best.fcw"), Default::default()).unwrap().best_val, Some(lowest));
}

#[test]
fn micro_batching_does_not_change_the_step() {
    let data = common::synthetic_frames(4, 7, 14);
    let run = |micro: usize| {
        let cfg = TrainConfig { batch_size: 4, micro_batch: micro, epochs: 1, ..TrainConfig::default() };
        let mut t = Trainer::new(cfg, build_facechannel(7, 3).unwrap()).unwrap();
        t.run_epoch(&data).unwrap();
        t.into_model()
    };
    let (whole, split) = (run(4), run(1));
    for (a, b) in whole.params().zip(split.params()) {
        let diff = a.value.data().iter().zip(b.value.data()).map(|(x, y)| (x - y).abs()).fold(0.0f32, f32::max);
        assert!(diff < 1e-5, "{}: {diff}", a.name);
    }
}

#[test]
fn empty_training_set_is_rejected() {
    let err = train::train(&small_config(1), None, &[], &[], None).unwrap_err();
    assert!(matches!(err, Error::Train(TrainError::EmptySet(_))));
    assert_eq!(err.kind(), ErrorKind::Validation);
}

#[test]
fn sequence_training_needs_a_base() {
    let cfg = TrainConfig { variant: Variant::Sequence, ..small_config(1) };
    let clips = common::synthetic_clips(1, 7, 1);
    let err = train::train(&cfg, None, &clips, &[], None).unwrap_err();
    assert!(matches!(err, Error::Train(TrainError::MissingBase)));
}

#[test]
fn frames_given_to_a_sequence_model_are_rejected() {
    let base = build_facechannel(7, 0).unwrap();
    let fcs = build_facechannels(&base, TrunkMode::Freeze, SequenceWiring::Sequential, 0).unwrap();
    let cfg = TrainConfig { variant: Variant::Sequence, freeze_trunk: true, ..small_config(1) };
    let mut t = Trainer::new(cfg, fcs).unwrap();
    let err = t.run_epoch(&common::synthetic_frames(2, 7, 0)).unwrap_err();
    assert!(matches!(err, Error::Train(TrainError::VariantMismatch(_))));
}

#[test]
fn frozen_trunk_is_untouched_by_sequence_training() {
    let base = build_facechannel(7, 0).unwrap();
    let fcs = build_facechannels(&base, TrunkMode::Freeze, SequenceWiring::Concat, 0).unwrap();
    let cfg = TrainConfig {
        variant: Variant::Sequence,
        freeze_trunk: true,
        wiring: SequenceWiring::Concat,
        batch_size: 2,
        micro_batch: 2,
        epochs: 1,
        ..TrainConfig::default()
    };
    let mut t = Trainer::new(cfg, fcs.clone()).unwrap();
    t.run_epoch(&common::synthetic_clips(2, 7, 5)).unwrap();
    for p in t.model().params() {
        let before = &fcs.param(&p.name).unwrap().value;
        match t.model().stage_of(&p.name) {
            Some(fckit::model::Stage::Trunk) => assert_eq!(&p.value, before, "{} moved", p.name),
            _ if p.name.starts_with("lstm.w_") => assert_ne!(&p.value, before, "{} did not train", p.name),
            _ => {}
        }
    }
}

#[test]
fn expression_only_regime_leaves_regression_heads() {
    let data = common::synthetic_frames(4, 7, 6);
    let model = build_facechannel(7, 8).unwrap();
    let cfg = TrainConfig { tasks: TaskMask::only(fckit::model::Task::Expression), ..small_config(1) };
    let mut t = Trainer::new(cfg, model.clone()).unwrap();
    let report = t.run_epoch(&data).unwrap();
    assert!(report.steps.iter().all(|s| s.arousal == 0.0 && s.valence == 0.0 && s.expression > 0.0));
    for name in ["head.arousal.weight", "head.arousal.bias", "head.valence.weight", "head.valence.bias"] {
        assert_eq!(t.model().param(name).unwrap().value, model.param(name).unwrap().value, "{name}");
    }
}

#[test]
fn unlabeled_tasks_are_flagged() {
    let mut data = common::synthetic_frames(3, 7, 2);
    data.iter_mut().for_each(|e| e.labels.expression = None);
    let mut t = Trainer::new(small_config(1), build_facechannel(7, 0).unwrap()).unwrap();
    let report = t.run_epoch(&data).unwrap();
    assert_eq!(report.flagged, vec![fckit::model::Task::Expression]);
    assert!(report.steps.iter().all(|s| s.expression == 0.0));
}
