//! Weights plus optimizer state, so training can resume exactly.
//!
//! `<stem>.fcw` holds the model; the sidecar `<stem>.opt.fcw` holds Adam's
//! moments (`<param>.m1`, `<param>.m2`), the step counter and the epoch.

use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::model::weights::{apply_records, read_records, skeleton_for, write_records};
use crate::model::{save_weights, ModelGraph};
use crate::tensor::Tensor;

use super::optim::{Adam, AdamConfig};

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: ModelGraph,
    pub optimizer: Adam,
    /// Completed epochs.
    pub epoch: usize,
    /// Best validation loss seen so far.
    pub best_val: Option<f64>,
}

/// `runs/last.fcw` → `runs/last.opt.fcw`.
pub fn sidecar_path(weights: &Path) -> PathBuf {
    let stem = weights.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    weights.with_file_name(format!("{stem}.opt.fcw"))
}

fn split_f64(v: f64) -> Tensor {
    let hi = v as f32;
    let lo = (v - hi as f64) as f32;
    Tensor::new(&[2], vec![hi, lo]).expect("two values")
}

fn join_f64(t: &Tensor) -> f64 {
    t.data().iter().map(|&v| v as f64).sum()
}

impl Checkpoint {
    pub fn save(&self, weights: &Path) -> Result<()> {
        save_weights(&self.model, weights)?;
        let mut records = self.optimizer.to_records();
        records.push(("meta.epoch".into(), Tensor::new(&[2], vec![(self.epoch >> 24) as f32, (self.epoch & 0xFF_FFFF) as f32])?));
        if let Some(best) = self.best_val {
            records.push(("meta.best_val".into(), split_f64(best)));
        }
        write_records(&sidecar_path(weights), records.iter().map(|(n, t)| (n.as_str(), t)))?;
        Ok(())
    }

    pub fn load(weights: &Path, adam: AdamConfig) -> Result<Self> {
        let records = read_records(weights)?;
        let mut model = skeleton_for(&records)?;
        apply_records(&mut model, records)?;
        let (optimizer, rest) = Adam::from_records(adam, read_records(&sidecar_path(weights))?);
        let mut epoch = 0;
        let mut best_val = None;
        for (name, t) in rest {
            match name.as_str() {
                "meta.epoch" if t.len() == 2 => epoch = ((t.data()[0] as usize) << 24) | t.data()[1] as usize,
                "meta.best_val" => best_val = Some(join_f64(&t)),
                _ => {}
            }
        }
        Ok(Self { model, optimizer, epoch, best_val })
    }
}
