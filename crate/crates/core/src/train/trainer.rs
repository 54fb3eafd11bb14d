//! The epoch loop.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result, TrainError};
use crate::metrics::MetricsReport;
use crate::model::{ModelGraph, Task, Variant};
use crate::tensor::Tensor;

use super::checkpoint::Checkpoint;
use super::config::TrainConfig;
use super::evaluate::evaluate;
use super::loss::{partial_loss, Labels, TaskCounts};
use super::optim::Adam;

/// One model input with its targets: a `[120,120,3]` frame or a `[10,120,120,3]` clip.
#[derive(Clone, Debug)]
pub struct Example {
    pub input: Tensor,
    pub labels: Labels,
}

pub const LOG_HEADER: &str = "epoch,step,loss,arousal,valence,expression";
pub const VAL_LOG_HEADER: &str = "epoch,val_loss,ccc_arousal,ccc_valence,f1,accuracy";

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepLog {
    pub epoch: usize,
    pub step: usize,
    pub loss: f32,
    pub arousal: f32,
    pub valence: f32,
    pub expression: f32,
}

impl StepLog {
    pub fn csv(&self) -> String {
        format!("{},{},{},{},{},{}", self.epoch, self.step, self.loss, self.arousal, self.valence, self.expression)
    }
}

#[derive(Clone, Debug)]
pub struct EpochReport {
    /// 1-based.
    pub epoch: usize,
    pub steps: Vec<StepLog>,
    /// Step losses averaged with batch-size weights.
    pub mean_loss: f64,
    /// Enabled tasks that had no labels in some batch.
    pub flagged: Vec<Task>,
}

#[derive(Clone, Debug)]
pub struct ValidationRecord {
    pub epoch: usize,
    pub loss: f64,
    pub report: Option<MetricsReport>,
}

impl ValidationRecord {
    pub fn csv(&self) -> String {
        match &self.report {
            Some(r) => format!("{},{},{},{},{},{}", self.epoch, self.loss, r.ccc_arousal, r.ccc_valence, r.f1, r.accuracy),
            None => format!("{},{},,,,", self.epoch, self.loss),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub last: Checkpoint,
    /// Lowest validation loss; `None` without a validation set.
    pub best: Option<Checkpoint>,
    pub epochs: Vec<EpochReport>,
    pub validation: Vec<ValidationRecord>,
}

pub struct Trainer {
    config: TrainConfig,
    model: ModelGraph,
    optimizer: Adam,
    epoch: usize,
    best_val: Option<f64>,
}

impl Trainer {
    pub fn new(config: TrainConfig, model: ModelGraph) -> Result<Self> {
        Self::from_checkpoint(config, Checkpoint { optimizer: Adam::new(Default::default()), model, epoch: 0, best_val: None })
    }

    /// Continue from a checkpoint; the epoch counter and Adam state carry over.
    pub fn from_checkpoint(config: TrainConfig, checkpoint: Checkpoint) -> Result<Self> {
        config.validate()?;
        let Checkpoint { mut model, mut optimizer, epoch, best_val } = checkpoint;
        if model.variant() != config.variant {
            return Err(TrainError::VariantMismatch(format!("config says {}, model is {}", config.variant, model.variant())).into());
        }
        if model.classes() != config.classes {
            return Err(Error::Invalid(format!("config has {} classes, model has {}", config.classes, model.classes())));
        }
        if model.variant() == Variant::Sequence {
            model.set_trunk_frozen(config.freeze_trunk);
        }
        optimizer.config = config.adam;
        model.zero_grad();
        Ok(Self { config, model, optimizer, epoch, best_val })
    }

    pub fn model(&self) -> &ModelGraph {
        &self.model
    }

    pub fn into_model(self) -> ModelGraph {
        self.model
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint { model: self.model.clone(), optimizer: self.optimizer.clone(), epoch: self.epoch, best_val: self.best_val }
    }

    fn check_examples(&self, data: &[Example]) -> Result<()> {
        let rank = match self.model.variant() {
            Variant::Frame => 3,
            Variant::Sequence => 4,
        };
        if let Some(bad) = data.iter().find(|e| e.input.ndim() != rank) {
            return Err(TrainError::VariantMismatch(format!(
                "{} model given an input of shape {:?}",
                self.model.variant(),
                bad.input.shape()
            ))
            .into());
        }
        Ok(())
    }

    /// Visiting order for the current epoch, a pure function of seed and epoch.
    fn order(&self, n: usize) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(self.epoch as u64 + 1);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        order
    }

    /// Forward, loss, backward over `batch`, then one optimizer step.
    pub fn train_step(&mut self, batch: &[&Example]) -> Result<super::JointLossSummary> {
        let labels: Vec<Labels> = batch.iter().map(|e| e.labels).collect();
        let mask = self.config.tasks;
        let counts = TaskCounts::of(&labels, mask);
        let mut summary = super::JointLossSummary::default();
        for (c, chunk) in batch.chunks(self.config.micro_batch).enumerate() {
            let start = c * self.config.micro_batch;
            let inputs: Vec<Tensor> = chunk.iter().map(|e| e.input.clone()).collect();
            let cache = self.model.forward_train(&Tensor::stack(&inputs)?)?;
            let loss = partial_loss(cache.outputs(), &labels[start..start + chunk.len()], mask, self.config.loss_weights, counts)?;
            summary.add(&loss);
            self.model.backward(cache, &loss.grads)?;
        }
        summary.flagged = mask.tasks().filter(|&t| counts.get(t) == 0).collect();
        if !summary.total.is_finite() {
            self.model.zero_grad();
            return Err(TrainError::NonFiniteLoss { epoch: self.epoch + 1, step: self.optimizer.steps_taken() as usize + 1 }.into());
        }
        self.optimizer.step(&mut self.model)?;
        Ok(summary)
    }

    pub fn run_epoch(&mut self, data: &[Example]) -> Result<EpochReport> {
        if data.is_empty() {
            return Err(TrainError::EmptySet("training").into());
        }
        self.check_examples(data)?;
        let order = self.order(data.len());
        let mut steps = Vec::new();
        let mut weighted = 0.0;
        let mut flagged = Vec::new();
        for (step, idx) in order.chunks(self.config.batch_size).enumerate() {
            let batch: Vec<&Example> = idx.iter().map(|&i| &data[i]).collect();
            let s = self.train_step(&batch)?;
            weighted += s.total as f64 * batch.len() as f64;
            for t in s.flagged {
                if !flagged.contains(&t) {
                    flagged.push(t);
                }
            }
            steps.push(StepLog { epoch: self.epoch + 1, step: step + 1, loss: s.total, arousal: s.arousal, valence: s.valence, expression: s.expression });
        }
        self.epoch += 1;
        Ok(EpochReport { epoch: self.epoch, steps, mean_loss: weighted / data.len() as f64, flagged })
    }

    /// Joint loss of the current model over a whole set, without updating anything.
    pub fn dataset_loss(&self, data: &[Example]) -> Result<f64> {
        if data.is_empty() {
            return Err(TrainError::EmptySet("evaluation").into());
        }
        self.check_examples(data)?;
        let labels: Vec<Labels> = data.iter().map(|e| e.labels).collect();
        let counts = TaskCounts::of(&labels, self.config.tasks);
        let mut total = 0.0f64;
        for (c, chunk) in data.chunks(self.config.micro_batch).enumerate() {
            let start = c * self.config.micro_batch;
            let inputs: Vec<Tensor> = chunk.iter().map(|e| e.input.clone()).collect();
            let outputs = self.model.forward(&Tensor::stack(&inputs)?)?;
            let loss = partial_loss(&outputs, &labels[start..start + chunk.len()], self.config.tasks, self.config.loss_weights, counts)?;
            total += loss.total as f64;
        }
        Ok(total)
    }

    /// Train until `config.epochs` epochs are complete.
    ///
    /// With `out_dir`, writes `train_log.csv`, `val_log.csv`, `last.fcw` and,
    /// given validation data, `best.fcw` (each with its `.opt.fcw` sidecar).
    pub fn fit(&mut self, train: &[Example], val: &[Example], out_dir: Option<&Path>) -> Result<TrainOutcome> {
        if train.is_empty() {
            return Err(TrainError::EmptySet("training").into());
        }
        let resuming = self.epoch > 0;
        let mut logs = match out_dir {
            Some(dir) => {
                std::fs::create_dir_all(dir).map_err(|source| TrainError::Io { path: dir.into(), source })?;
                Some((
                    open_log(&dir.join("train_log.csv"), LOG_HEADER, resuming)?,
                    open_log(&dir.join("val_log.csv"), VAL_LOG_HEADER, resuming)?,
                ))
            }
            None => None,
        };
        let mut epochs = Vec::new();
        let mut validation = Vec::new();
        let mut best = None;
        while self.epoch < self.config.epochs {
            let report = self.run_epoch(train)?;
            if let Some((log, _)) = logs.as_mut() {
                for s in &report.steps {
                    write_line(log, &s.csv(), out_dir.unwrap())?;
                }
            }
            if !val.is_empty() {
                let loss = self.dataset_loss(val)?;
                let record = ValidationRecord {
                    epoch: self.epoch,
                    loss,
                    report: evaluate(&self.model, val, self.config.f1_average).ok(),
                };
                if let Some((_, vlog)) = logs.as_mut() {
                    write_line(vlog, &record.csv(), out_dir.unwrap())?;
                }
                if self.best_val.map_or(true, |b| loss < b) {
                    self.best_val = Some(loss);
                    let ck = self.checkpoint();
                    if let Some(dir) = out_dir {
                        ck.save(&dir.join("best.fcw"))?;
                    }
                    best = Some(ck);
                }
                validation.push(record);
            }
            if let Some(dir) = out_dir {
                self.checkpoint().save(&dir.join("last.fcw"))?;
            }
            epochs.push(report);
        }
        Ok(TrainOutcome { last: self.checkpoint(), best, epochs, validation })
    }
}

fn open_log(path: &Path, header: &str, append: bool) -> Result<File> {
    let io = |source| Error::from(TrainError::Io { path: path.into(), source });
    let mut file = if append && path.exists() {
        OpenOptions::new().append(true).open(path).map_err(io)?
    } else {
        let mut f = File::create(path).map_err(io)?;
        writeln!(f, "{header}").map_err(io)?;
        f
    };
    file.flush().map_err(io)?;
    Ok(file)
}

fn write_line(file: &mut File, line: &str, dir: &Path) -> Result<()> {
    writeln!(file, "{line}").map_err(|source| TrainError::Io { path: dir.into(), source }.into())
}

/// Build a fresh model for `config` and train it.
///
/// Sequence models need `base`, a trained frame model whose trunk they reuse.
pub fn train(config: &TrainConfig, base: Option<&ModelGraph>, train: &[Example], val: &[Example], out_dir: Option<&Path>) -> Result<TrainOutcome> {
    use crate::model::{build_facechannel, build_facechannels, TrunkMode};
    if train.is_empty() {
        return Err(TrainError::EmptySet("training").into());
    }
    let model = match config.variant {
        Variant::Frame => build_facechannel(config.classes, config.seed)?,
        Variant::Sequence => {
            let base = base.ok_or(TrainError::MissingBase)?;
            let mode = if config.freeze_trunk { TrunkMode::Freeze } else { TrunkMode::FineTune };
            build_facechannels(base, mode, config.wiring, config.seed)?
        }
    };
    Trainer::new(config.clone(), model)?.fit(train, val, out_dir)
}
