use std::fs;
use std::path::{Path, PathBuf};

use fckit::data::{
    self, apply_balance, clips, filter_coherence, load_clips, load_frames, manifest_dir, parse_manifest, stats,
    write_manifest, Balance, FilterThresholds, Sample,
};
use fckit::error::TrainError;
use fckit::gradcheck::{grad_check_suite, GradCheckConfig, Primitive};
use fckit::model::{
    build_facechannel, build_facechannels, load_weights, ModelGraph, PredictionTriple, TrunkMode, Variant,
    CLIP_LEN, EXPRESSION_NAMES,
};
use fckit::tensor::Tensor;
use fckit::train::{self, score, Checkpoint, Example, Labels, TrainConfig, Trainer};
use fckit::Error;

use crate::{EvalArgs, Failure, GradcheckArgs, InspectArgs, PredictArgs, PrepArgs, TrainArgs};

type CmdResult = Result<(), Failure>;

fn write(path: &Path, contents: impl AsRef<[u8]>) -> CmdResult {
    fs::write(path, contents).map_err(|e| Failure::io(path, e))
}

fn create_dir(path: &Path) -> CmdResult {
    fs::create_dir_all(path).map_err(|e| Failure::io(path, e))
}

/// Make relative sample paths resolve from `to` instead of `from`.
fn rebase(samples: &mut [Sample], from: &Path, to: &Path) -> CmdResult {
    let canonical = |p: &Path| fs::canonicalize(p).map_err(|e| Failure::io(p, e));
    let (from, to) = (canonical(from)?, canonical(to)?);
    if from != to {
        for s in samples.iter_mut().filter(|s| s.path.is_relative()) {
            s.path = from.join(&s.path);
        }
    }
    Ok(())
}

pub fn prep(a: PrepArgs) -> CmdResult {
    let mut samples = parse_manifest(&a.manifest)?;
    create_dir(&a.out_dir)?;
    if a.filter {
        let (kept, report) = filter_coherence(&samples, &FilterThresholds::default());
        print!("{report}");
        write(&a.out_dir.join("filter_report.txt"), report.to_string())?;
        samples = kept;
    }
    samples = apply_balance(&samples, a.balance, a.classes, a.seed)?;
    rebase(&mut samples, manifest_dir(&a.manifest), &a.out_dir)?;
    let out = a.out_dir.join("manifest.csv");
    write_manifest(&out, &samples)?;
    let augmented = samples.iter().filter(|s| s.is_augmented()).count();
    println!("wrote {} samples ({augmented} augmented) to {}", samples.len(), out.display());
    if a.stats {
        let report = stats(&samples, a.classes);
        let text = report.to_text(&EXPRESSION_NAMES);
        print!("{text}");
        write(&a.out_dir.join("stats.txt"), &text)?;
        write(&a.out_dir.join("class_counts.csv"), report.classes_csv(&EXPRESSION_NAMES))?;
        write(&a.out_dir.join("label_bins.csv"), report.bins_csv())?;
    }
    Ok(())
}

/// Decode a manifest into model inputs: frames, or ten-frame clips.
fn load_examples(samples: &[Sample], variant: Variant, base: &Path) -> Result<Vec<Example>, Error> {
    match variant {
        Variant::Frame => load_frames(samples, base),
        Variant::Sequence => load_clips(&clips(samples), base),
    }
}

fn load_config(a: &TrainArgs) -> Result<TrainConfig, Failure> {
    let mut cfg = match &a.config {
        Some(path) => TrainConfig::from_path(path)?,
        None => TrainConfig::default(),
    };
    if let Some(p) = &a.base_weights {
        cfg.base_weights = Some(p.clone());
    }
    if let Some(p) = &a.out_dir {
        cfg.out_dir = Some(p.clone());
    }
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    for o in &a.overrides {
        let (key, value) = o.split_once('=').ok_or_else(|| Failure::invalid(format!("--set expects KEY=VALUE, got `{o}`")))?;
        cfg.set(key.trim(), value.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn fresh_model(cfg: &TrainConfig) -> Result<ModelGraph, Error> {
    match cfg.variant {
        Variant::Frame => build_facechannel(cfg.classes, cfg.seed),
        Variant::Sequence => {
            let path = cfg.base_weights.as_ref().ok_or(TrainError::MissingBase)?;
            let base = load_weights(path)?;
            let mode = if cfg.freeze_trunk { TrunkMode::Freeze } else { TrunkMode::FineTune };
            build_facechannels(&base, mode, cfg.wiring, cfg.seed)
        }
    }
}

pub fn train(a: TrainArgs) -> CmdResult {
    let cfg = load_config(&a)?;
    let manifest = cfg.train_manifest.clone().ok_or_else(|| Failure::invalid("train_manifest is not set"))?;
    let out_dir = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("runs"));
    // Fail on a missing base before decoding any images.
    if cfg.variant == Variant::Sequence && cfg.base_weights.is_none() && !a.resume {
        return Err(Error::from(TrainError::MissingBase).into());
    }

    let mut samples = parse_manifest(&manifest)?;
    if cfg.filter {
        let (kept, report) = filter_coherence(&samples, &FilterThresholds::default());
        print!("{report}");
        samples = kept;
    }
    match cfg.variant {
        Variant::Frame => samples = apply_balance(&samples, cfg.balance, cfg.classes, cfg.seed)?,
        Variant::Sequence if cfg.balance != Balance::None => {
            eprintln!("note: balancing is skipped for sequence models; augmented copies would break clips");
        }
        Variant::Sequence => {}
    }
    let train_set = load_examples(&samples, cfg.variant, manifest_dir(&manifest))?;
    let val_set = match &cfg.val_manifest {
        Some(path) => load_examples(&parse_manifest(path)?, cfg.variant, manifest_dir(path))?,
        None => Vec::new(),
    };
    println!("training on {} examples, validating on {}", train_set.len(), val_set.len());

    let last = out_dir.join("last.fcw");
    let mut trainer = if a.resume && last.exists() {
        let checkpoint = Checkpoint::load(&last, cfg.adam)?;
        println!("resuming after epoch {}", checkpoint.epoch);
        Trainer::from_checkpoint(cfg.clone(), checkpoint)?
    } else {
        Trainer::new(cfg.clone(), fresh_model(&cfg)?)?
    };
    create_dir(&out_dir)?;
    write(&out_dir.join("config.txt"), cfg.to_text())?;
    let outcome = trainer.fit(&train_set, &val_set, Some(&out_dir))?;
    for (i, e) in outcome.epochs.iter().enumerate() {
        let val = outcome.validation.get(i).map(|v| format!("  val_loss {:.6}", v.loss)).unwrap_or_default();
        println!("epoch {:>4}  loss {:.6}{val}", e.epoch, e.mean_loss);
        for t in &e.flagged {
            eprintln!("note: epoch {} had batches without {} labels", e.epoch, t.name());
        }
    }
    println!("checkpoints in {}", out_dir.display());
    Ok(())
}

/// Predictions CSV with columns `arousal,valence,class` (extra columns ignored).
fn read_predictions(path: &Path, classes: usize) -> Result<Vec<PredictionTriple>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let header: Vec<&str> = lines.next().map(|(_, h)| h.split(',').map(str::trim).collect()).unwrap_or_default();
    let col = |name: &str| {
        header.iter().position(|h| *h == name).ok_or_else(|| Failure::invalid(format!("{}: missing column `{name}`", path.display())))
    };
    let (ca, cv, cc) = (col("arousal")?, col("valence")?, col("class")?);
    lines
        .map(|(i, line)| {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = || Failure::invalid(format!("{}:{}: malformed prediction row", path.display(), i + 1));
            let get = |c: usize| fields.get(c).copied().ok_or_else(bad);
            let class: usize = get(cc)?.parse().map_err(|_| bad())?;
            if class >= classes {
                return Err(Failure::invalid(format!("{}:{}: class {class} outside [0,{classes})", path.display(), i + 1)));
            }
            let mut class_distribution = vec![0.0; classes];
            class_distribution[class] = 1.0;
            Ok(PredictionTriple {
                arousal: get(ca)?.parse().map_err(|_| bad())?,
                valence: get(cv)?.parse().map_err(|_| bad())?,
                class_distribution,
            })
        })
        .collect()
}

pub fn eval(a: EvalArgs) -> CmdResult {
    let samples = parse_manifest(&a.manifest)?;
    let report = match (&a.weights, &a.predictions) {
        (Some(weights), _) => {
            let model = load_weights(weights)?;
            let examples = load_examples(&samples, model.variant(), manifest_dir(&a.manifest))?;
            train::evaluate(&model, &examples, a.f1)?
        }
        (None, Some(path)) => {
            let predictions = read_predictions(path, a.classes)?;
            let labels: Vec<Labels> = samples.iter().map(Sample::labels).collect();
            if predictions.len() != labels.len() {
                return Err(Failure::invalid(format!(
                    "{} predictions for {} manifest rows",
                    predictions.len(),
                    labels.len()
                )));
            }
            score(&predictions, &labels, a.classes, a.f1)?
        }
        (None, None) => return Err(Failure::invalid("give --weights or --predictions")),
    };
    println!("{report}");
    if let Some(dir) = &a.out_dir {
        create_dir(dir)?;
        write(&dir.join("metrics.csv"), report.to_csv())?;
        write(&dir.join("confusion.csv"), report.confusion.to_csv())?;
    }
    Ok(())
}

pub fn predict(a: PredictArgs) -> CmdResult {
    let model = load_weights(&a.weights)?;
    let examples = match &a.manifest {
        Some(m) => load_examples(&parse_manifest(m)?, model.variant(), manifest_dir(m))?,
        None => {
            if a.images.is_empty() {
                return Err(Failure::invalid("give image paths or --manifest"));
            }
            let frames = a.images.iter().map(|p| data::decode_image(p)).collect::<Result<Vec<_>, _>>()?;
            let inputs = match model.variant() {
                Variant::Frame => frames,
                Variant::Sequence => {
                    if frames.len() % CLIP_LEN != 0 {
                        return Err(Failure::invalid(format!(
                            "a sequence model takes images in groups of {CLIP_LEN}, got {}",
                            frames.len()
                        )));
                    }
                    frames.chunks(CLIP_LEN).map(Tensor::stack).collect::<Result<Vec<_>, _>>().map_err(Error::from)?
                }
            };
            inputs.into_iter().map(|input| Example { input, labels: Labels::default() }).collect()
        }
    };
    println!("arousal,valence,class,confidence");
    for p in train::predict(&model, &examples)? {
        println!("{:.6},{:.6},{},{:.6}", p.arousal, p.valence, p.class(), p.confidence());
    }
    Ok(())
}

pub fn inspect(a: InspectArgs) -> CmdResult {
    let model = if let Some(w) = &a.weights {
        load_weights(w)?
    } else {
        let mut cfg = match &a.config {
            Some(path) => TrainConfig::from_path(path)?,
            None => TrainConfig::default(),
        };
        if let Some(v) = a.variant {
            cfg.variant = v;
        }
        if let Some(k) = a.classes {
            cfg.classes = k;
        }
        if let Some(w) = a.wiring {
            cfg.wiring = w;
        }
        let frame = build_facechannel(cfg.classes, cfg.seed)?;
        match cfg.variant {
            Variant::Frame => frame,
            Variant::Sequence => {
                let mode = if cfg.freeze_trunk { TrunkMode::Freeze } else { TrunkMode::FineTune };
                build_facechannels(&frame, mode, cfg.wiring, cfg.seed)?
            }
        }
    };
    print!("{}", model.summary());
    Ok(())
}

pub fn gradcheck(a: GradcheckArgs) -> CmdResult {
    let primitives = if a.primitives.is_empty() {
        Primitive::ALL.to_vec()
    } else {
        a.primitives.iter().map(|p| p.parse()).collect::<Result<Vec<Primitive>, _>>()?
    };
    if a.seeds == 0 {
        return Err(Failure::invalid("--seeds must be at least 1"));
    }
    let config = GradCheckConfig { step: a.step, tolerance: a.tolerance };
    let suite = grad_check_suite(&primitives, a.seeds, &config)?;
    println!("{:<14} {:>14}  status", "primitive", "max_rel_error");
    for (p, err) in suite.worst() {
        println!("{:<14} {err:>14.3e}  {}", p.name(), if err <= a.tolerance { "ok" } else { "FAIL" });
    }
    println!("{} checks over {} seeds in {:.2?}", suite.reports.len(), a.seeds, suite.elapsed);
    if suite.passed() {
        Ok(())
    } else {
        Err(Failure::internal(format!("gradient check failed (tolerance {:e})", a.tolerance)))
    }
}
