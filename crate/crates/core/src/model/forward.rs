//! Forward passes, with an optional cache for the matching backward pass.

use crate::error::{Error, Result, ShapeError};
use crate::ops::{self, activation, lstm::GATES, LstmParams, LstmStepCache};
use crate::tensor::Tensor;

use super::{Activation, LayerKind, ModelGraph, SequenceWiring, Stage, Task, Variant, CHANNELS, CLIP_LEN, FRAME_SIZE};

/// Per-input prediction.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionTriple {
    pub arousal: f32,
    pub valence: f32,
    pub class_distribution: Vec<f32>,
}

impl PredictionTriple {
    /// Most probable class; the lowest index wins ties.
    pub fn class(&self) -> usize {
        self.class_distribution
            .iter()
            .enumerate()
            .fold((0, f32::NEG_INFINITY), |best, (i, &p)| if p > best.1 { (i, p) } else { best })
            .0
    }

    pub fn confidence(&self) -> f32 {
        self.class_distribution[self.class()]
    }
}

/// Batched head activations: arousal `[B,1]`, valence `[B,1]`, expression `[B,K]`.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadOutputs {
    pub arousal: Tensor,
    pub valence: Tensor,
    pub expression: Tensor,
}

impl HeadOutputs {
    pub fn batch(&self) -> usize {
        self.arousal.shape()[0]
    }

    pub fn get(&self, task: Task) -> &Tensor {
        match task {
            Task::Arousal => &self.arousal,
            Task::Valence => &self.valence,
            Task::Expression => &self.expression,
        }
    }

    pub fn triples(&self) -> Vec<PredictionTriple> {
        let k = self.expression.shape()[1];
        (0..self.batch())
            .map(|b| PredictionTriple {
                arousal: self.arousal.data()[b],
                valence: self.valence.data()[b],
                class_distribution: self.expression.data()[b * k..(b + 1) * k].to_vec(),
            })
            .collect()
    }
}

/// Loss gradients w.r.t. the head activations. `None` leaves a head untouched.
#[derive(Clone, Debug, Default)]
pub struct HeadGrads {
    pub arousal: Option<Tensor>,
    pub valence: Option<Tensor>,
    pub expression: Option<Tensor>,
}

impl HeadGrads {
    pub fn get(&self, task: Task) -> Option<&Tensor> {
        match task {
            Task::Arousal => self.arousal.as_ref(),
            Task::Valence => self.valence.as_ref(),
            Task::Expression => self.expression.as_ref(),
        }
    }
}

enum TrunkStep {
    Conv { name: String },
    Pool { argmax: Vec<usize> },
    Flatten,
    Dense { name: String },
}

struct TrunkCache {
    /// `acts[i]` is the input of step `i`; the last entry is the trunk output.
    acts: Vec<Tensor>,
    steps: Vec<TrunkStep>,
}

struct SequenceCache {
    batch: usize,
    steps: Vec<LstmStepCache<f32>>,
    last_hidden: Tensor,
    dense_out: Tensor,
}

/// State retained by [`ModelGraph::forward_train`] for [`ModelGraph::backward`].
pub struct ForwardCache {
    trunk: Option<TrunkCache>,
    sequence: Option<SequenceCache>,
    head_input: Tensor,
    outputs: HeadOutputs,
}

impl ForwardCache {
    pub fn outputs(&self) -> &HeadOutputs {
        &self.outputs
    }
}

impl ModelGraph {
    fn check_input(&self, input: &Tensor) -> Result<usize> {
        let frame = [FRAME_SIZE, FRAME_SIZE, CHANNELS];
        let (expected, tail): (&str, &[usize]) = match self.variant {
            Variant::Frame => ("[B,120,120,3]", &input.shape()[1.min(input.ndim())..]),
            Variant::Sequence => ("[B,10,120,120,3]", &input.shape()[1.min(input.ndim())..]),
        };
        let ok = match self.variant {
            Variant::Frame => tail == frame,
            Variant::Sequence => tail.len() == 4 && tail[0] == CLIP_LEN && tail[1..] == frame,
        };
        if !ok {
            if self.variant == Variant::Sequence && tail.len() == 4 && tail[1..] == frame {
                return Err(Error::Invalid(format!("clips must have exactly {CLIP_LEN} frames, got {}", tail[0])));
            }
            return Err(ShapeError::mismatch("forward", expected, format!("{:?}", input.shape())).into());
        }
        Ok(input.shape()[0])
    }

    /// Frame-model predictions for a `[B,120,120,3]` batch.
    pub fn forward_frame(&self, batch: &Tensor) -> Result<Vec<PredictionTriple>> {
        if self.variant != Variant::Frame {
            return Err(Error::Invalid("forward_frame needs a frame model".into()));
        }
        Ok(self.forward(batch)?.triples())
    }

    /// Sequence-model predictions for `[B,10,120,120,3]` clips.
    pub fn forward_sequence(&self, clips: &Tensor) -> Result<Vec<PredictionTriple>> {
        if self.variant != Variant::Sequence {
            return Err(Error::Invalid("forward_sequence needs a sequence model".into()));
        }
        Ok(self.forward(clips)?.triples())
    }

    /// Inference forward pass for either variant.
    pub fn forward(&self, input: &Tensor) -> Result<HeadOutputs> {
        Ok(self.run(input, false)?.outputs)
    }

    /// Forward pass that keeps what [`Self::backward`] needs.
    pub fn forward_train(&self, input: &Tensor) -> Result<ForwardCache> {
        self.run(input, true)
    }

    fn run(&self, input: &Tensor, keep: bool) -> Result<ForwardCache> {
        let batch = self.check_input(input)?;
        let (trunk, sequence, head_input) = match self.variant {
            Variant::Frame => {
                let (features, cache) = self.trunk_forward(input.clone(), keep)?;
                (cache, None, features)
            }
            Variant::Sequence => {
                let frames = input.clone().reshape(&[batch * CLIP_LEN, FRAME_SIZE, FRAME_SIZE, CHANNELS])?;
                let (features, cache) = self.trunk_forward(frames, keep && !self.frozen_trunk)?;
                let (head_input, seq) = self.sequence_forward(&features, batch)?;
                (cache, Some(seq), head_input)
            }
        };
        let outputs = self.heads_forward(&head_input)?;
        Ok(ForwardCache { trunk, sequence: sequence.filter(|_| keep), head_input, outputs })
    }

    /// Output shape of every trunk layer for a `[B,120,120,3]` batch.
    pub fn trunk_trace(&self, frames: &Tensor) -> Result<Vec<(String, Vec<usize>)>> {
        if frames.ndim() != 4 || frames.shape()[1..] != [FRAME_SIZE, FRAME_SIZE, CHANNELS] {
            return Err(ShapeError::mismatch("trunk_trace", "[B,120,120,3]", format!("{:?}", frames.shape())).into());
        }
        let (_, cache) = self.trunk_forward(frames.clone(), true)?;
        let acts = cache.expect("kept activations").acts;
        let names = self.layers.iter().filter(|l| l.stage == Stage::Trunk).map(|l| l.name.clone());
        Ok(names.zip(acts.iter().skip(1).map(|a| a.shape().to_vec())).collect())
    }

    fn trunk_forward(&self, input: Tensor, keep: bool) -> Result<(Tensor, Option<TrunkCache>)> {
        let mut acts = Vec::new();
        let mut steps = Vec::new();
        let mut x = input;
        for layer in self.layers.iter().filter(|l| l.stage == Stage::Trunk) {
            let (y, step) = match &layer.kind {
                LayerKind::Conv2d { .. } => {
                    let mut y = ops::conv2d(&x, self.value(&format!("{}.kernel", layer.name)), self.value(&format!("{}.bias", layer.name)))?;
                    y.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
                    (y, TrunkStep::Conv { name: layer.name.clone() })
                }
                LayerKind::MaxPool2 => {
                    let pooled = ops::maxpool2(&x)?;
                    (pooled.output, TrunkStep::Pool { argmax: pooled.argmax })
                }
                LayerKind::Flatten { features } => {
                    let b = x.shape()[0];
                    let y = x.clone().reshape(&[b, *features])?;
                    (y, TrunkStep::Flatten)
                }
                LayerKind::Dense { activation, .. } => {
                    let y = ops::dense(&x, self.value(&format!("{}.weight", layer.name)), self.value(&format!("{}.bias", layer.name)))?;
                    debug_assert_eq!(*activation, Activation::Relu);
                    (activation::relu(&y), TrunkStep::Dense { name: layer.name.clone() })
                }
                other => unreachable!("{other:?} in trunk"),
            };
            if keep {
                acts.push(x);
                steps.push(step);
            }
            x = y;
        }
        if keep {
            acts.push(x.clone());
            return Ok((x, Some(TrunkCache { acts, steps })));
        }
        Ok((x, None))
    }

    fn lstm_params(&self) -> LstmParams<'_, f32> {
        let names = super::Layer { name: "lstm".into(), kind: LayerKind::Lstm { inputs: 0, units: 0 }, stage: Stage::Sequence }.param_names();
        LstmParams {
            weights: std::array::from_fn(|k| self.value(&names[k])),
            biases: std::array::from_fn(|k| self.value(&names[GATES + k])),
        }
    }

    /// Scan the LSTM over the per-frame features of each clip.
    fn sequence_forward(&self, features: &Tensor, batch: usize) -> Result<(Tensor, SequenceCache)> {
        let width = features.shape()[1];
        let params = self.lstm_params();
        let units = params.biases[0].len();
        let mut h = Tensor::zeros(&[batch, units]);
        let mut c = Tensor::zeros(&[batch, units]);
        let mut steps = Vec::with_capacity(CLIP_LEN);
        for t in 0..CLIP_LEN {
            let x = Tensor::from_fn(&[batch, width], |j| features.data()[((j / width) * CLIP_LEN + t) * width + j % width]);
            let (h2, c2, cache) = ops::lstm_step(&x, &h, &c, &params)?;
            h = h2;
            c = c2;
            steps.push(cache);
        }
        let dense_out = activation::relu(&ops::dense(&h, self.value("seq_dense.weight"), self.value("seq_dense.bias"))?);
        let head_input = match self.wiring {
            SequenceWiring::Sequential => dense_out.clone(),
            SequenceWiring::Concat => concat_rows(&h, &dense_out),
        };
        Ok((head_input, SequenceCache { batch, steps, last_hidden: h, dense_out }))
    }

    fn heads_forward(&self, input: &Tensor) -> Result<HeadOutputs> {
        let head = |task: Task| -> Result<Tensor> {
            let name = format!("head.{}", task.name());
            let z = ops::dense(input, self.value(&format!("{name}.weight")), self.value(&format!("{name}.bias")))?;
            Ok(match task {
                Task::Expression => activation::softmax(&z)?,
                _ => activation::tanh_act(&z),
            })
        };
        Ok(HeadOutputs { arousal: head(Task::Arousal)?, valence: head(Task::Valence)?, expression: head(Task::Expression)? })
    }

    /// Accumulate parameter gradients for the loss whose head gradients are `grads`.
    ///
    /// Heads with no gradient receive nothing, and a frozen trunk is skipped.
    pub fn backward(&mut self, cache: ForwardCache, grads: &HeadGrads) -> Result<()> {
        let ForwardCache { trunk, sequence, head_input, outputs } = cache;
        let mut d_input: Option<Tensor> = None;
        for task in Task::ALL {
            let Some(g) = grads.get(task) else { continue };
            let out = outputs.get(task);
            if g.shape() != out.shape() {
                return Err(ShapeError::mismatch("backward", format!("{} grad {:?}", task.name(), out.shape()), format!("{:?}", g.shape())).into());
            }
            let dz = match task {
                Task::Expression => activation::softmax_backward(out, g)?,
                _ => activation::tanh_backward(out, g),
            };
            let name = format!("head.{}", task.name());
            let dg = ops::dense_backward(&head_input, self.value(&format!("{name}.weight")), &dz)?;
            self.accumulate(&format!("{name}.weight"), &dg.weight);
            self.accumulate(&format!("{name}.bias"), &dg.bias);
            d_input = Some(match d_input {
                None => dg.input,
                Some(acc) => add(&acc, &dg.input),
            });
        }
        let Some(d_head_input) = d_input else { return Ok(()) };

        let d_features = match self.variant {
            Variant::Frame => d_head_input,
            Variant::Sequence => {
                let seq = sequence.ok_or_else(|| Error::Invalid("sequence cache missing".into()))?;
                self.sequence_backward(seq, d_head_input)?
            }
        };
        if self.variant == Variant::Sequence && self.frozen_trunk {
            return Ok(());
        }
        let trunk = trunk.ok_or_else(|| Error::Invalid("trunk cache missing".into()))?;
        self.trunk_backward(trunk, d_features)
    }

    fn sequence_backward(&mut self, seq: SequenceCache, d_head_input: Tensor) -> Result<Tensor> {
        let units = seq.last_hidden.shape()[1];
        let (mut d_h, d_dense_out) = match self.wiring {
            SequenceWiring::Sequential => (Tensor::zeros(&[seq.batch, units]), d_head_input),
            SequenceWiring::Concat => split_rows(&d_head_input, units),
        };
        let d_pre = activation::relu_backward(&seq.dense_out, &d_dense_out);
        let dg = ops::dense_backward(&seq.last_hidden, self.value("seq_dense.weight"), &d_pre)?;
        self.accumulate("seq_dense.weight", &dg.weight);
        self.accumulate("seq_dense.bias", &dg.bias);
        d_h = add(&d_h, &dg.input);

        let mut d_c = Tensor::zeros(&[seq.batch, units]);
        let inputs = self.lstm_params().weights[0].shape()[0] - units;
        let mut d_features = vec![0.0f32; seq.batch * CLIP_LEN * inputs];
        let mut d_w: [Tensor; GATES] = std::array::from_fn(|_| Tensor::zeros(&[inputs + units, units]));
        let mut d_b: [Tensor; GATES] = std::array::from_fn(|_| Tensor::zeros(&[units]));
        for (t, step) in seq.steps.iter().enumerate().rev() {
            let g = ops::lstm_step_backward(step, &self.lstm_params(), &d_h, &d_c)?;
            for k in 0..GATES {
                d_w[k] = add(&d_w[k], &g.weights[k]);
                d_b[k] = add(&d_b[k], &g.biases[k]);
            }
            for b in 0..seq.batch {
                d_features[(b * CLIP_LEN + t) * inputs..][..inputs].copy_from_slice(&g.x.data()[b * inputs..][..inputs]);
            }
            d_h = g.h;
            d_c = g.c;
        }
        let names = self.layers.iter().find(|l| l.name == "lstm").expect("lstm layer").param_names();
        for k in 0..GATES {
            self.accumulate(&names[k], &d_w[k]);
            self.accumulate(&names[GATES + k], &d_b[k]);
        }
        Ok(Tensor::new(&[seq.batch * CLIP_LEN, inputs], d_features)?)
    }

    fn trunk_backward(&mut self, cache: TrunkCache, d_out: Tensor) -> Result<()> {
        let TrunkCache { mut acts, steps } = cache;
        let mut dy = d_out;
        let mut output = acts.pop().expect("trunk output");
        for (i, step) in steps.into_iter().enumerate().rev() {
            let input = acts.pop().expect("trunk activation");
            let need_input = i > 0;
            dy = match step {
                TrunkStep::Conv { name } => {
                    let d_pre = activation::relu_backward(&output, &dy);
                    let g = ops::conv2d_backward(&input, self.value(&format!("{name}.kernel")), &d_pre, need_input)?;
                    self.accumulate(&format!("{name}.kernel"), &g.kernels);
                    self.accumulate(&format!("{name}.bias"), &g.bias);
                    match g.input {
                        Some(d) => d,
                        None => break,
                    }
                }
                TrunkStep::Pool { argmax } => ops::maxpool2_backward(input.shape(), &argmax, &dy)?,
                TrunkStep::Flatten => dy.reshape(input.shape())?,
                TrunkStep::Dense { name } => {
                    let d_pre = activation::relu_backward(&output, &dy);
                    let g = ops::dense_backward(&input, self.value(&format!("{name}.weight")), &d_pre)?;
                    self.accumulate(&format!("{name}.weight"), &g.weight);
                    self.accumulate(&format!("{name}.bias"), &g.bias);
                    g.input
                }
            };
            output = input;
        }
        Ok(())
    }
}

fn add(a: &Tensor, b: &Tensor) -> Tensor {
    debug_assert_eq!(a.shape(), b.shape());
    Tensor::from_fn(a.shape(), |j| a.data()[j] + b.data()[j])
}

fn concat_rows(a: &Tensor, b: &Tensor) -> Tensor {
    let (rows, wa, wb) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let mut data = Vec::with_capacity(rows * (wa + wb));
    for r in 0..rows {
        data.extend_from_slice(&a.data()[r * wa..][..wa]);
        data.extend_from_slice(&b.data()[r * wb..][..wb]);
    }
    Tensor::new(&[rows, wa + wb], data).expect("concat shape")
}

fn split_rows(x: &Tensor, left: usize) -> (Tensor, Tensor) {
    let (rows, width) = (x.shape()[0], x.shape()[1]);
    let right = width - left;
    let mut a = Vec::with_capacity(rows * left);
    let mut b = Vec::with_capacity(rows * right);
    for row in x.data().chunks(width) {
        a.extend_from_slice(&row[..left]);
        b.extend_from_slice(&row[left..]);
    }
    (Tensor::new(&[rows, left], a).expect("split"), Tensor::new(&[rows, right], b).expect("split"))
}
