//! Adam with bias correction.

use indexmap::IndexMap;

use crate::error::TrainError;
use crate::model::ModelGraph;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// First and second moment estimates for one parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub m1: Tensor,
    pub m2: Tensor,
}

/// One Adam update of `value` in place; `step` is the 1-based step number.
pub fn adam_update(value: &mut [f32], grad: &[f32], moments: &mut Moments, step: u64, cfg: &AdamConfig) {
    let bc1 = 1.0 - (cfg.beta1 as f64).powi(step as i32);
    let bc2 = 1.0 - (cfg.beta2 as f64).powi(step as i32);
    let step_size = (cfg.learning_rate as f64 / bc1) as f32;
    let bc2_sqrt = bc2.sqrt() as f32;
    let (m1, m2) = (moments.m1.data_mut(), moments.m2.data_mut());
    for j in 0..value.len() {
        let g = grad[j];
        m1[j] = cfg.beta1 * m1[j] + (1.0 - cfg.beta1) * g;
        m2[j] = cfg.beta2 * m2[j] + (1.0 - cfg.beta2) * g * g;
        value[j] -= step_size * m1[j] / (m2[j].sqrt() / bc2_sqrt + cfg.epsilon);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    state: IndexMap<String, Moments>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, step: 0, state: IndexMap::new() }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn moments(&self, name: &str) -> Option<&Moments> {
        self.state.get(name)
    }

    /// Apply accumulated gradients to every trainable parameter, then zero all gradients.
    ///
    /// Nothing is modified when any trainable gradient is non-finite.
    pub fn step(&mut self, model: &mut ModelGraph) -> Result<(), TrainError> {
        let trainable: Vec<String> = model.params().filter(|p| model.is_trainable(&p.name)).map(|p| p.name.clone()).collect();
        for name in &trainable {
            let p = model.param(name).expect("listed parameter");
            if !p.grad.all_finite() {
                return Err(TrainError::NonFiniteGradient(name.clone()));
            }
        }
        self.step += 1;
        for name in &trainable {
            let p = model.param_mut(name).expect("listed parameter");
            let moments = self.state.entry(name.clone()).or_insert_with(|| Moments {
                m1: Tensor::zeros(p.value.shape()),
                m2: Tensor::zeros(p.value.shape()),
            });
            adam_update(p.value.data_mut(), p.grad.data(), moments, self.step, &self.config);
        }
        model.zero_grad();
        Ok(())
    }

    /// Sidecar records: `<param>.m1`, `<param>.m2` and `adam.step`.
    pub fn to_records(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::with_capacity(2 * self.state.len() + 1);
        // u64 split into two exactly representable halves
        let step = Tensor::new(&[2], vec![(self.step >> 24) as f32, (self.step & 0xFF_FFFF) as f32]).expect("step record");
        out.push(("adam.step".to_string(), step));
        for (name, m) in &self.state {
            out.push((format!("{name}.m1"), m.m1.clone()));
            out.push((format!("{name}.m2"), m.m2.clone()));
        }
        out
    }

    /// Inverse of [`Self::to_records`]; unrelated records are returned untouched.
    pub fn from_records(config: AdamConfig, records: Vec<(String, Tensor)>) -> (Self, Vec<(String, Tensor)>) {
        let mut adam = Self::new(config);
        let mut m1s = IndexMap::new();
        let mut m2s = IndexMap::new();
        let mut rest = Vec::new();
        for (name, t) in records {
            if name == "adam.step" && t.len() == 2 {
                adam.step = ((t.data()[0] as u64) << 24) | t.data()[1] as u64;
            } else if let Some(base) = name.strip_suffix(".m1") {
                m1s.insert(base.to_string(), t);
            } else if let Some(base) = name.strip_suffix(".m2") {
                m2s.insert(base.to_string(), t);
            } else {
                rest.push((name, t));
            }
        }
        for (name, m1) in m1s {
            if let Some(m2) = m2s.swap_remove(&name) {
                adam.state.insert(name, Moments { m1, m2 });
            }
        }
        (adam, rest)
    }
}
