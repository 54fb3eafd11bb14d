//! `key = value` training configuration.
//!
//! `#` starts a comment. Unknown keys are rejected. Command-line overrides go
//! through [`TrainConfig::set`], so they accept exactly the same keys.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::data::Balance;
use crate::error::ConfigError;
use crate::metrics::F1Average;
use crate::model::{SequenceWiring, Variant, DEFAULT_CLASSES};

use super::loss::{LossWeights, TaskMask};
use super::optim::AdamConfig;

/// Seed used whenever none is given.
pub const DEFAULT_SEED: u64 = 42;
/// Batch size of the reference experiments.
pub const DEFAULT_BATCH_SIZE: usize = 1024;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub variant: Variant,
    pub classes: usize,
    pub wiring: SequenceWiring,
    pub freeze_trunk: bool,
    pub tasks: TaskMask,
    pub loss_weights: LossWeights,
    pub batch_size: usize,
    /// Inputs per forward/backward chunk; gradients of a batch are summed over chunks.
    pub micro_batch: usize,
    pub epochs: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub f1_average: F1Average,
    pub train_manifest: Option<PathBuf>,
    pub val_manifest: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub base_weights: Option<PathBuf>,
    pub filter: bool,
    pub balance: Balance,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Frame,
            classes: DEFAULT_CLASSES,
            wiring: SequenceWiring::Sequential,
            freeze_trunk: false,
            tasks: TaskMask::all(),
            loss_weights: LossWeights::default(),
            batch_size: DEFAULT_BATCH_SIZE,
            micro_batch: 32,
            epochs: 10,
            adam: AdamConfig::default(),
            seed: DEFAULT_SEED,
            f1_average: F1Average::Macro,
            train_manifest: None,
            val_manifest: None,
            out_dir: None,
            base_weights: None,
            filter: true,
            balance: Balance::None,
        }
    }
}

pub const KEYS: [&str; 23] = [
    "variant",
    "classes",
    "wiring",
    "freeze_trunk",
    "tasks",
    "weight_arousal",
    "weight_valence",
    "weight_expression",
    "batch_size",
    "micro_batch",
    "epochs",
    "learning_rate",
    "beta1",
    "beta2",
    "epsilon",
    "seed",
    "f1_average",
    "train_manifest",
    "val_manifest",
    "out_dir",
    "base_weights",
    "filter",
    "balance",
];

fn value_err(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Value { key: key.into(), message: message.into() }
}

fn number<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| value_err(key, format!("cannot parse `{value}`")))
}

fn boolean(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(value_err(key, format!("expected a boolean, got `{value}`"))),
    }
}

impl TrainConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        let mut config = Self::parse(&text)?;
        // Relative paths inside a config file are relative to that file.
        if let Some(dir) = path.parent() {
            for p in [&mut config.train_manifest, &mut config.val_manifest, &mut config.out_dir, &mut config.base_weights]
                .into_iter()
                .flatten()
            {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut config = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Syntax { line: idx + 1, message: format!("expected `key = value`, got `{line}`") });
            };
            config.set(key.trim(), value.trim())?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "variant" => {
                self.variant = match value {
                    "frame" | "fc" => Variant::Frame,
                    "sequence" | "fcs" | "fc-s" => Variant::Sequence,
                    _ => return Err(value_err(key, format!("expected frame|sequence, got `{value}`"))),
                }
            }
            "classes" => self.classes = number(key, value)?,
            "wiring" => {
                self.wiring = match value {
                    "sequential" => SequenceWiring::Sequential,
                    "concat" => SequenceWiring::Concat,
                    _ => return Err(value_err(key, format!("expected sequential|concat, got `{value}`"))),
                }
            }
            "freeze_trunk" => self.freeze_trunk = boolean(key, value)?,
            "tasks" => self.tasks = TaskMask::parse(value)?,
            "weight_arousal" => self.loss_weights.arousal = number(key, value)?,
            "weight_valence" => self.loss_weights.valence = number(key, value)?,
            "weight_expression" => self.loss_weights.expression = number(key, value)?,
            "batch_size" => self.batch_size = number(key, value)?,
            "micro_batch" => self.micro_batch = number(key, value)?,
            "epochs" => self.epochs = number(key, value)?,
            "learning_rate" => self.adam.learning_rate = number(key, value)?,
            "beta1" => self.adam.beta1 = number(key, value)?,
            "beta2" => self.adam.beta2 = number(key, value)?,
            "epsilon" => self.adam.epsilon = number(key, value)?,
            "seed" => self.seed = number(key, value)?,
            "f1_average" => {
                self.f1_average = match value {
                    "macro" => F1Average::Macro,
                    "weighted" => F1Average::Weighted,
                    _ => return Err(value_err(key, format!("expected macro|weighted, got `{value}`"))),
                }
            }
            "train_manifest" => self.train_manifest = Some(value.into()),
            "val_manifest" => self.val_manifest = Some(value.into()),
            "out_dir" => self.out_dir = Some(value.into()),
            "base_weights" => self.base_weights = Some(value.into()),
            "filter" => self.filter = boolean(key, value)?,
            "balance" => self.balance = value.parse().map_err(|m: String| value_err(key, m))?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.batch_size == 0 {
            return Err(value_err("batch_size", "must be at least 1"));
        }
        if self.micro_batch == 0 {
            return Err(value_err("micro_batch", "must be at least 1"));
        }
        if !(self.adam.learning_rate > 0.0) {
            return Err(value_err("learning_rate", "must be positive"));
        }
        for (key, b) in [("beta1", self.adam.beta1), ("beta2", self.adam.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(value_err(key, "must lie in [0,1)"));
            }
        }
        if !(self.adam.epsilon > 0.0) {
            return Err(value_err("epsilon", "must be positive"));
        }
        if self.classes < 2 {
            return Err(value_err("classes", "need at least 2"));
        }
        let w = self.loss_weights;
        if [w.arousal, w.valence, w.expression].iter().any(|v| !(*v >= 0.0)) {
            return Err(value_err("weight_*", "loss weights must be non-negative"));
        }
        if !self.tasks.tasks().any(|t| w.get(t) > 0.0) {
            return Err(value_err("weight_*", "at least one enabled task needs a positive weight"));
        }
        Ok(())
    }

    /// Render back to `key = value` form; `parse(to_text())` reproduces `self`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let _ = writeln!(out, "variant = {}", self.variant);
        let _ = writeln!(out, "classes = {}", self.classes);
        let _ = writeln!(out, "wiring = {}", match self.wiring {
            SequenceWiring::Sequential => "sequential",
            SequenceWiring::Concat => "concat",
        });
        let _ = writeln!(out, "freeze_trunk = {}", self.freeze_trunk);
        let _ = writeln!(out, "tasks = {}", self.tasks);
        let _ = writeln!(out, "weight_arousal = {}", self.loss_weights.arousal);
        let _ = writeln!(out, "weight_valence = {}", self.loss_weights.valence);
        let _ = writeln!(out, "weight_expression = {}", self.loss_weights.expression);
        let _ = writeln!(out, "batch_size = {}", self.batch_size);
        let _ = writeln!(out, "micro_batch = {}", self.micro_batch);
        let _ = writeln!(out, "epochs = {}", self.epochs);
        let _ = writeln!(out, "learning_rate = {}", self.adam.learning_rate);
        let _ = writeln!(out, "beta1 = {}", self.adam.beta1);
        let _ = writeln!(out, "beta2 = {}", self.adam.beta2);
        let _ = writeln!(out, "epsilon = {}", self.adam.epsilon);
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "f1_average = {}", match self.f1_average {
            F1Average::Macro => "macro",
            F1Average::Weighted => "weighted",
        });
        for (key, value) in [
            ("train_manifest", path(&self.train_manifest)),
            ("val_manifest", path(&self.val_manifest)),
            ("out_dir", path(&self.out_dir)),
            ("base_weights", path(&self.base_weights)),
        ] {
            if let Some(v) = value {
                let _ = writeln!(out, "{key} = {v}");
            }
        }
        let _ = writeln!(out, "filter = {}", self.filter);
        let _ = writeln!(out, "balance = {}", self.balance);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_values() {
        let cfg = TrainConfig::parse(
            "# desk-scale run\nbatch_size = 16\nepochs=3 # short\ntasks = arousal\nlearning_rate = 0.0005\nbalance = cat\n",
        )
        .unwrap();
        assert_eq!(cfg.batch_size, 16);
        assert_eq!(cfg.epochs, 3);
        assert_eq!(cfg.tasks, TaskMask::only(crate::model::Task::Arousal));
        assert_eq!(cfg.adam.learning_rate, 0.0005);
        assert_eq!(cfg.balance, Balance::Categorical);
    }

    #[test]
    fn defaults_follow_reference_setup() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.batch_size, 1024);
        assert_eq!(cfg.loss_weights, LossWeights { arousal: 1.0, valence: 1.0, expression: 1.0 });
        assert_eq!(cfg.adam, AdamConfig { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 });
        assert_eq!(cfg.seed, DEFAULT_SEED);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(matches!(TrainConfig::parse("momentum = 0.9"), Err(ConfigError::UnknownKey(k)) if k == "momentum"));
        assert!(matches!(TrainConfig::parse("batch_size = 0"), Err(ConfigError::Value { .. })));
        assert!(matches!(TrainConfig::parse("learning_rate = -1"), Err(ConfigError::Value { .. })));
        assert!(matches!(TrainConfig::parse("batch_size"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(TrainConfig::parse("tasks = arousal\nweight_arousal = 0").is_err());
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = TrainConfig::default();
        for key in KEYS {
            assert!(cfg.to_text().contains(key) || key.ends_with("manifest") || key == "out_dir" || key == "base_weights");
        }
        cfg.set("variant", "sequence").unwrap();
        cfg.set("out_dir", "runs/a").unwrap();
        cfg.set("wiring", "concat").unwrap();
        cfg.set("balance", "dim").unwrap();
        assert_eq!(TrainConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }
}
