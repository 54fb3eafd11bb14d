//! Single-task and joint training, evaluation and checkpoints.

mod checkpoint;
pub mod config;
mod evaluate;
pub mod loss;
pub mod optim;
mod trainer;

pub use checkpoint::{sidecar_path, Checkpoint};
pub use config::{TrainConfig, DEFAULT_SEED};
pub use evaluate::{evaluate, predict, score};
pub use loss::{joint_loss, partial_loss, JointLoss, Labels, LossWeights, TaskCounts, TaskMask};
pub use optim::{Adam, AdamConfig};
pub use trainer::{train, EpochReport, Example, StepLog, TrainOutcome, Trainer, ValidationRecord, LOG_HEADER, VAL_LOG_HEADER};

use crate::model::Task;

/// Loss components summed over the chunks of one optimisation step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct JointLossSummary {
    pub total: f32,
    pub arousal: f32,
    pub valence: f32,
    pub expression: f32,
    pub flagged: Vec<Task>,
}

impl JointLossSummary {
    fn add(&mut self, loss: &JointLoss) {
        self.total += loss.total;
        self.arousal += loss.arousal;
        self.valence += loss.valence;
        self.expression += loss.expression;
    }
}
