//! Central finite-difference checks of every primitive's backward pass.
//!
//! Checks run in f64. Each primitive is wrapped in a scalar loss: ops with
//! tensor outputs are projected onto a fixed random tensor `R` (`L = Σ y·R`),
//! so that the upstream gradient `R` exercises every output.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use crate::ops::{self, LstmParams, GATES};
use crate::tensor::Tensor;

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;
/// Smallest denominator in the relative error.
pub const ERROR_FLOOR: f64 = 1e-8;
/// Inputs closer than this to a kink (ReLU at 0, pooling ties) are redrawn.
pub const KINK_MARGIN: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Primitive {
    Conv2d,
    MaxPool2,
    Dense,
    Relu,
    Tanh,
    Sigmoid,
    Softmax,
    LstmStep,
    Mse,
    CrossEntropy,
}

impl Primitive {
    pub const ALL: [Primitive; 10] = [
        Primitive::Conv2d,
        Primitive::MaxPool2,
        Primitive::Dense,
        Primitive::Relu,
        Primitive::Tanh,
        Primitive::Sigmoid,
        Primitive::Softmax,
        Primitive::LstmStep,
        Primitive::Mse,
        Primitive::CrossEntropy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Primitive::Conv2d => "conv2d",
            Primitive::MaxPool2 => "maxpool2",
            Primitive::Dense => "dense",
            Primitive::Relu => "relu",
            Primitive::Tanh => "tanh",
            Primitive::Sigmoid => "sigmoid",
            Primitive::Softmax => "softmax",
            Primitive::LstmStep => "lstm_step",
            Primitive::Mse => "mse",
            Primitive::CrossEntropy => "cross_entropy",
        }
    }
}

impl fmt::Display for Primitive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Primitive {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Primitive::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown primitive `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckConfig {
    pub step: f64,
    pub tolerance: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { step: DEFAULT_STEP, tolerance: DEFAULT_TOLERANCE }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub primitive: Primitive,
    pub seed: u64,
    pub max_rel_error: f64,
    /// Worst relative error per differentiated argument, e.g. `("kernels", 3e-9)`.
    pub per_param: Vec<(String, f64)>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(ERROR_FLOOR)
}

type LossFn = Box<dyn Fn(&[Tensor<f64>]) -> Result<f64>>;

/// A scalar function of named tensors with its analytic gradients.
struct Case {
    names: Vec<&'static str>,
    inputs: Vec<Tensor<f64>>,
    loss: LossFn,
    grads: Vec<Tensor<f64>>,
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(lo..hi))
}

fn project(y: &Tensor<f64>, r: &Tensor<f64>) -> f64 {
    y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

/// Uniform values none of which lie within [`KINK_MARGIN`] of zero.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| loop {
        let v = rng.gen_range(-1.0..1.0);
        if f64::abs(v) >= KINK_MARGIN {
            break v;
        }
    })
}

/// An input whose 2×2 pooling windows each have a clear maximum.
fn untied_pool_input(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    loop {
        let t = uniform(rng, shape, -1.0, 1.0);
        let (h, w, c) = (shape[1], shape[2], shape[3]);
        let clear = (0..shape[0]).all(|b| {
            (0..h / 2).all(|py| {
                (0..w / 2).all(|px| {
                    (0..c).all(|ch| {
                        let mut v: Vec<f64> = (0..4).map(|k| t.at(&[b, 2 * py + k / 2, 2 * px + k % 2, ch])).collect();
                        v.sort_by(|a, b| b.total_cmp(a));
                        v[0] - v[1] >= KINK_MARGIN
                    })
                })
            })
        });
        if clear {
            return t;
        }
    }
}

fn build(primitive: Primitive, rng: &mut ChaCha8Rng) -> Result<Case> {
    use Primitive::*;
    Ok(match primitive {
        Conv2d => {
            let x = uniform(rng, &[1, 6, 6, 2], -1.0, 1.0);
            let k = uniform(rng, &[3, 3, 2, 2], -0.5, 0.5);
            let b = uniform(rng, &[2], -0.5, 0.5);
            let r = uniform(rng, &[1, 6, 6, 2], -1.0, 1.0);
            let g = ops::conv2d_backward(&x, &k, &r, true)?;
            let loss: LossFn = Box::new(move |t| Ok(project(&ops::conv2d(&t[0], &t[1], &t[2])?, &r)));
            Case { names: vec!["input", "kernels", "bias"], inputs: vec![x, k, b], loss, grads: vec![g.input.unwrap(), g.kernels, g.bias] }
        }
        MaxPool2 => {
            let x = untied_pool_input(rng, &[2, 5, 6, 2]);
            let pooled = ops::maxpool2(&x)?;
            let r = uniform(rng, pooled.output.shape(), -1.0, 1.0);
            let g = ops::maxpool2_backward(x.shape(), &pooled.argmax, &r)?;
            let loss: LossFn = Box::new(move |t| Ok(project(&ops::maxpool2(&t[0])?.output, &r)));
            Case { names: vec!["input"], inputs: vec![x], loss, grads: vec![g] }
        }
        Dense => {
            let x = uniform(rng, &[4, 3], -1.0, 1.0);
            let w = uniform(rng, &[3, 5], -1.0, 1.0);
            let b = uniform(rng, &[5], -1.0, 1.0);
            let r = uniform(rng, &[4, 5], -1.0, 1.0);
            let g = ops::dense_backward(&x, &w, &r)?;
            let loss: LossFn = Box::new(move |t| Ok(project(&ops::dense(&t[0], &t[1], &t[2])?, &r)));
            Case { names: vec!["input", "weight", "bias"], inputs: vec![x, w, b], loss, grads: vec![g.input, g.weight, g.bias] }
        }
        Relu | Tanh | Sigmoid => {
            let x = if primitive == Relu { away_from_zero(rng, &[4, 6]) } else { uniform(rng, &[4, 6], -2.0, 2.0) };
            let r = uniform(rng, &[4, 6], -1.0, 1.0);
            let (forward, backward): (fn(&Tensor<f64>) -> Tensor<f64>, fn(&Tensor<f64>, &Tensor<f64>) -> Tensor<f64>) = match primitive {
                Relu => (ops::relu, ops::relu_backward),
                Tanh => (ops::tanh_act, ops::tanh_backward),
                _ => (ops::sigmoid, ops::sigmoid_backward),
            };
            let g = backward(&forward(&x), &r);
            let loss: LossFn = Box::new(move |t| Ok(project(&forward(&t[0]), &r)));
            Case { names: vec!["input"], inputs: vec![x], loss, grads: vec![g] }
        }
        Softmax => {
            let x = uniform(rng, &[3, 5], -2.0, 2.0);
            let r = uniform(rng, &[3, 5], -1.0, 1.0);
            let g = ops::softmax_backward(&ops::softmax(&x)?, &r)?;
            let loss: LossFn = Box::new(move |t| Ok(project(&ops::softmax(&t[0])?, &r)));
            Case { names: vec!["input"], inputs: vec![x], loss, grads: vec![g] }
        }
        LstmStep => {
            let (batch, n, u) = (2, 4, 3);
            let mut inputs = vec![
                uniform(rng, &[batch, n], -1.0, 1.0),
                uniform(rng, &[batch, u], -1.0, 1.0),
                uniform(rng, &[batch, u], -1.0, 1.0),
            ];
            inputs.extend((0..GATES).map(|_| uniform(rng, &[n + u, u], -0.7, 0.7)));
            inputs.extend((0..GATES).map(|_| uniform(rng, &[u], -0.5, 0.5)));
            let rh = uniform(rng, &[batch, u], -1.0, 1.0);
            let rc = uniform(rng, &[batch, u], -1.0, 1.0);
            fn params(t: &[Tensor<f64>]) -> LstmParams<'_, f64> {
                LstmParams { weights: std::array::from_fn(|k| &t[3 + k]), biases: std::array::from_fn(|k| &t[3 + GATES + k]) }
            }
            let (_, _, cache) = ops::lstm_step(&inputs[0], &inputs[1], &inputs[2], &params(&inputs))?;
            let g = ops::lstm_step_backward(&cache, &params(&inputs), &rh, &rc)?;
            let mut grads = vec![g.x, g.h, g.c];
            grads.extend(g.weights);
            grads.extend(g.biases);
            let loss: LossFn = Box::new(move |t| {
                let (h, c, _) = ops::lstm_step(&t[0], &t[1], &t[2], &params(t))?;
                Ok(project(&h, &rh) + project(&c, &rc))
            });
            let names = vec!["x", "h", "c", "w_i", "w_f", "w_g", "w_o", "b_i", "b_f", "b_g", "b_o"];
            Case { names, inputs, loss, grads }
        }
        Mse => {
            let pred = uniform(rng, &[6, 1], -1.0, 1.0);
            let target = uniform(rng, &[6, 1], -1.0, 1.0);
            let (_, g) = ops::mse(&pred, &target)?;
            let loss: LossFn = Box::new(move |t| Ok(ops::mse(&t[0], &target)?.0));
            Case { names: vec!["pred"], inputs: vec![pred], loss, grads: vec![g] }
        }
        CrossEntropy => {
            let (batch, classes) = (4, 7);
            let probs = ops::softmax(&uniform(rng, &[batch, classes], -1.5, 1.5))?;
            let targets: Vec<usize> = (0..batch).map(|_| rng.gen_range(0..classes)).collect();
            let (_, g) = ops::cross_entropy(&probs, &targets)?;
            let loss: LossFn = Box::new(move |t| Ok(ops::cross_entropy(&t[0], &targets)?.0));
            Case { names: vec!["probs"], inputs: vec![probs], loss, grads: vec![g] }
        }
    })
}

/// Compare analytic and central-difference gradients for one primitive.
pub fn grad_check(primitive: Primitive, seed: u64, config: &GradCheckConfig) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let case = build(primitive, &mut rng)?;
    let mut inputs = case.inputs.clone();
    let mut per_param = Vec::with_capacity(inputs.len());
    for (a, name) in case.names.iter().enumerate() {
        let mut worst = 0.0f64;
        for j in 0..inputs[a].len() {
            let original = inputs[a].data()[j];
            inputs[a].data_mut()[j] = original + config.step;
            let up = (case.loss)(&inputs)?;
            inputs[a].data_mut()[j] = original - config.step;
            let down = (case.loss)(&inputs)?;
            inputs[a].data_mut()[j] = original;
            let numeric = (up - down) / (2.0 * config.step);
            worst = worst.max(relative_error(case.grads[a].data()[j], numeric));
        }
        per_param.push((name.to_string(), worst));
    }
    let max_rel_error = per_param.iter().map(|p| p.1).fold(0.0, f64::max);
    Ok(GradCheckReport { primitive, seed, max_rel_error, per_param, tolerance: config.tolerance })
}

#[derive(Clone, Debug)]
pub struct SuiteReport {
    pub reports: Vec<GradCheckReport>,
    pub elapsed: Duration,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.reports.iter().all(GradCheckReport::passed)
    }

    /// Worst error per primitive, in [`Primitive::ALL`] order.
    pub fn worst(&self) -> Vec<(Primitive, f64)> {
        Primitive::ALL
            .iter()
            .filter_map(|&p| {
                let errs = self.reports.iter().filter(|r| r.primitive == p).map(|r| r.max_rel_error);
                errs.reduce(f64::max).map(|e| (p, e))
            })
            .collect()
    }
}

/// Check every primitive with seeds `0..seeds`.
pub fn grad_check_suite(primitives: &[Primitive], seeds: u64, config: &GradCheckConfig) -> Result<SuiteReport> {
    let start = Instant::now();
    let mut reports = Vec::new();
    for &p in primitives {
        for seed in 0..seeds {
            reports.push(grad_check(p, seed, config)?);
        }
    }
    Ok(SuiteReport { reports, elapsed: start.elapsed() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for p in Primitive::ALL {
            assert_eq!(p.name().parse::<Primitive>().unwrap(), p);
        }
        assert!("gelu".parse::<Primitive>().is_err());
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1.0, 1.0001) - 1e-4 / 1.0001).abs() < 1e-12);
        assert!((relative_error(1e-12, 0.0) - 1e-4).abs() < 1e-18);
    }

    #[test]
    fn each_primitive_passes_one_seed() {
        for p in Primitive::ALL {
            let r = grad_check(p, 7, &GradCheckConfig::default()).unwrap();
            assert!(r.passed(), "{p}: {:?}", r.per_param);
        }
    }

    #[test]
    fn detects_a_wrong_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut case = build(Primitive::Dense, &mut rng).unwrap();
        case.grads[1].data_mut()[0] *= 1.01;
        let numeric = {
            let mut t = case.inputs.clone();
            let v = t[1].data()[0];
            t[1].data_mut()[0] = v + 1e-5;
            let up = (case.loss)(&t).unwrap();
            t[1].data_mut()[0] = v - 1e-5;
            (up - (case.loss)(&t).unwrap()) / 2e-5
        };
        assert!(relative_error(case.grads[1].data()[0], numeric) > 1e-3);
    }
}
