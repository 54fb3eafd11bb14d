//! Multi-task objective: MSE on arousal and valence, cross-entropy on expression.

use std::fmt;

use crate::error::{ConfigError, Result};
use crate::model::{HeadGrads, HeadOutputs, Task};
use crate::ops;
use crate::tensor::Tensor;

/// Which heads receive a loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TaskMask {
    pub arousal: bool,
    pub valence: bool,
    pub expression: bool,
}

impl Default for TaskMask {
    fn default() -> Self {
        Self::all()
    }
}

impl TaskMask {
    pub fn all() -> Self {
        Self { arousal: true, valence: true, expression: true }
    }

    pub fn only(task: Task) -> Self {
        Self { arousal: task == Task::Arousal, valence: task == Task::Valence, expression: task == Task::Expression }
    }

    pub fn enabled(&self, task: Task) -> bool {
        match task {
            Task::Arousal => self.arousal,
            Task::Valence => self.valence,
            Task::Expression => self.expression,
        }
    }

    pub fn tasks(&self) -> impl Iterator<Item = Task> + '_ {
        Task::ALL.into_iter().filter(|t| self.enabled(*t))
    }

    /// Parse a comma list such as `arousal,expression` (or `all`).
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let err = |message: String| ConfigError::Value { key: "tasks".into(), message };
        if text.trim() == "all" {
            return Ok(Self::all());
        }
        let mut mask = Self { arousal: false, valence: false, expression: false };
        for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "arousal" => mask.arousal = true,
                "valence" => mask.valence = true,
                "expression" => mask.expression = true,
                other => return Err(err(format!("unknown task `{other}`"))),
            }
        }
        if !(mask.arousal || mask.valence || mask.expression) {
            return Err(err("at least one task must be enabled".into()));
        }
        Ok(mask)
    }
}

impl fmt::Display for TaskMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<_> = self.tasks().map(Task::name).collect();
        f.write_str(&names.join(","))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub arousal: f32,
    pub valence: f32,
    pub expression: f32,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { arousal: 1.0, valence: 1.0, expression: 1.0 }
    }
}

impl LossWeights {
    pub fn get(&self, task: Task) -> f32 {
        match task {
            Task::Arousal => self.arousal,
            Task::Valence => self.valence,
            Task::Expression => self.expression,
        }
    }
}

/// Targets for one input; `None` marks a missing label.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Labels {
    pub arousal: Option<f32>,
    pub valence: Option<f32>,
    pub expression: Option<usize>,
}

impl Labels {
    pub fn full(arousal: f32, valence: f32, expression: usize) -> Self {
        Self { arousal: Some(arousal), valence: Some(valence), expression: Some(expression) }
    }

    fn has(&self, task: Task) -> bool {
        match task {
            Task::Arousal => self.arousal.is_some(),
            Task::Valence => self.valence.is_some(),
            Task::Expression => self.expression.is_some(),
        }
    }
}

/// Labelled-sample counts per task over a whole optimisation batch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TaskCounts([usize; 3]);

impl TaskCounts {
    pub fn of(labels: &[Labels], mask: TaskMask) -> Self {
        let mut counts = [0; 3];
        for (i, task) in Task::ALL.into_iter().enumerate() {
            if mask.enabled(task) {
                counts[i] = labels.iter().filter(|l| l.has(task)).count();
            }
        }
        Self(counts)
    }

    pub fn get(&self, task: Task) -> usize {
        self.0[task as usize]
    }
}

/// Loss value, unweighted per-task components, and head gradients.
#[derive(Clone, Debug)]
pub struct JointLoss {
    pub total: f32,
    pub arousal: f32,
    pub valence: f32,
    pub expression: f32,
    /// Enabled tasks that had no labelled sample in the batch.
    pub flagged: Vec<Task>,
    pub grads: HeadGrads,
}

impl JointLoss {
    pub fn component(&self, task: Task) -> f32 {
        match task {
            Task::Arousal => self.arousal,
            Task::Valence => self.valence,
            Task::Expression => self.expression,
        }
    }
}

/// `L = w_a·mse_arousal + w_v·mse_valence + w_e·cross_entropy` over enabled tasks.
///
/// Each mean runs over the samples that carry that task's label.
pub fn joint_loss(outputs: &HeadOutputs, labels: &[Labels], mask: TaskMask, weights: LossWeights) -> Result<JointLoss> {
    partial_loss(outputs, labels, mask, weights, TaskCounts::of(labels, mask))
}

/// The share of a batch loss contributed by a slice of it.
///
/// `counts` are the labelled counts of the full batch; summing partial losses
/// and gradients over the slices reproduces [`joint_loss`] on the whole batch.
pub fn partial_loss(
    outputs: &HeadOutputs,
    labels: &[Labels],
    mask: TaskMask,
    weights: LossWeights,
    counts: TaskCounts,
) -> Result<JointLoss> {
    let batch = outputs.batch();
    if labels.len() != batch {
        return Err(crate::error::ShapeError::mismatch("joint_loss", format!("{batch} labels"), labels.len().to_string()).into());
    }
    let mut loss = JointLoss { total: 0.0, arousal: 0.0, valence: 0.0, expression: 0.0, flagged: Vec::new(), grads: HeadGrads::default() };
    for task in mask.tasks() {
        let full = counts.get(task);
        if full == 0 {
            loss.flagged.push(task);
            continue;
        }
        let rows: Vec<usize> = (0..batch).filter(|&b| labels[b].has(task)).collect();
        if rows.is_empty() {
            continue;
        }
        let pred = outputs.get(task);
        let width = pred.shape()[1];
        let gathered = Tensor::from_fn(&[rows.len(), width], |j| pred.data()[rows[j / width] * width + j % width]);
        let (value, grad) = match task {
            Task::Arousal | Task::Valence => {
                let target = Tensor::from_fn(&[rows.len(), 1], |j| match task {
                    Task::Arousal => labels[rows[j]].arousal.unwrap_or_default(),
                    _ => labels[rows[j]].valence.unwrap_or_default(),
                });
                ops::mse(&gathered, &target)?
            }
            Task::Expression => {
                let targets: Vec<usize> = rows.iter().map(|&b| labels[b].expression.unwrap_or_default()).collect();
                ops::cross_entropy(&gathered, &targets)?
            }
        };
        let share = if rows.len() == full { 1.0 } else { rows.len() as f32 / full as f32 };
        let component = if share == 1.0 { value } else { value * share };
        let w = weights.get(task);
        match task {
            Task::Arousal => loss.arousal = component,
            Task::Valence => loss.valence = component,
            Task::Expression => loss.expression = component,
        }
        loss.total += w * component;
        if w == 0.0 {
            continue;
        }
        let scale = w * share;
        let mut full_grad = Tensor::zeros(pred.shape());
        for (r, &b) in rows.iter().enumerate() {
            for k in 0..width {
                let g = grad.data()[r * width + k];
                full_grad.data_mut()[b * width + k] = if scale == 1.0 { g } else { g * scale };
            }
        }
        match task {
            Task::Arousal => loss.grads.arousal = Some(full_grad),
            Task::Valence => loss.grads.valence = Some(full_grad),
            Task::Expression => loss.grads.expression = Some(full_grad),
        }
    }
    Ok(loss)
}
