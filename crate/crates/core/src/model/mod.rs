//! FaceChannel (frame) and FaceChannelS (sequence) graphs.

mod forward;
pub mod weights;

use std::fmt;

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ops::lstm::{FORGET, GATES, GATE_NAMES};
use crate::tensor::{ParamTensor, Tensor};

pub use forward::{ForwardCache, HeadGrads, HeadOutputs, PredictionTriple};
pub use weights::{load_weights, load_weights_into, save_weights};

/// Input frames are square RGB crops of this side length.
pub const FRAME_SIZE: usize = 120;
pub const CHANNELS: usize = 3;
/// Frames per clip for the sequence model.
pub const CLIP_LEN: usize = 10;
/// Convolution widths, one inner slice per block; every block ends in a pool.
pub const CHANNEL_PLAN: [&[usize]; 4] = [&[16, 16], &[32, 32], &[64, 64, 64], &[80, 80, 80]];
pub const TRUNK_UNITS: usize = 500;
pub const LSTM_UNITS: usize = 100;
pub const SEQ_DENSE_UNITS: usize = 100;
pub const DEFAULT_CLASSES: usize = 7;
/// Default expression label order.
pub const EXPRESSION_NAMES: [&str; DEFAULT_CLASSES] =
    ["Neutral", "Anger", "Disgust", "Fear", "Happiness", "Sadness", "Surprise"];

/// Frame or clip model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Frame,
    Sequence,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Frame => "frame",
            Variant::Sequence => "sequence",
        })
    }
}

/// How the LSTM and the 100-unit dense layer reach the heads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SequenceWiring {
    /// LSTM → dense → heads.
    #[default]
    Sequential,
    /// Heads read `[h_T ‖ dense(h_T)]`.
    Concat,
}

/// What happens to the trunk when a sequence model is derived from a frame model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum TrunkMode {
    #[default]
    FineTune,
    Freeze,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Task {
    Arousal,
    Valence,
    Expression,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Arousal, Task::Valence, Task::Expression];

    pub fn name(self) -> &'static str {
        match self {
            Task::Arousal => "arousal",
            Task::Valence => "valence",
            Task::Expression => "expression",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Softmax,
}

/// Which part of the network a layer belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    /// Convolutions, pools and the 500-unit dense layer.
    Trunk,
    /// LSTM and the 100-unit dense layer of the sequence model.
    Sequence,
    Head,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LayerKind {
    Conv2d { cin: usize, cout: usize },
    MaxPool2,
    Flatten { features: usize },
    Dense { inputs: usize, units: usize, activation: Activation },
    Lstm { inputs: usize, units: usize },
    Head { task: Task, inputs: usize, units: usize, activation: Activation },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub name: String,
    pub kind: LayerKind,
    pub stage: Stage,
}

impl Layer {
    /// Parameter tensor names owned by this layer, in storage order.
    pub fn param_names(&self) -> Vec<String> {
        match self.kind {
            LayerKind::Conv2d { .. } => vec![format!("{}.kernel", self.name), format!("{}.bias", self.name)],
            LayerKind::Dense { .. } | LayerKind::Head { .. } => {
                vec![format!("{}.weight", self.name), format!("{}.bias", self.name)]
            }
            LayerKind::Lstm { .. } => GATE_NAMES
                .iter()
                .map(|g| format!("{}.w_{g}", self.name))
                .chain(GATE_NAMES.iter().map(|g| format!("{}.b_{g}", self.name)))
                .collect(),
            LayerKind::MaxPool2 | LayerKind::Flatten { .. } => Vec::new(),
        }
    }

    fn output_desc(&self) -> String {
        match &self.kind {
            LayerKind::Conv2d { cin, cout } => format!("conv3x3 {cin}->{cout} relu"),
            LayerKind::MaxPool2 => "maxpool 2x2".into(),
            LayerKind::Flatten { features } => format!("flatten {features}"),
            LayerKind::Dense { inputs, units, activation } => format!("dense {inputs}->{units} {activation:?}").to_lowercase(),
            LayerKind::Lstm { inputs, units } => format!("lstm {inputs}->{units}"),
            LayerKind::Head { inputs, units, activation, .. } => format!("head {inputs}->{units} {activation:?}").to_lowercase(),
        }
    }
}

/// Ordered layers plus their named parameters.
#[derive(Clone, Debug)]
pub struct ModelGraph {
    variant: Variant,
    classes: usize,
    wiring: SequenceWiring,
    layers: Vec<Layer>,
    params: IndexMap<String, ParamTensor>,
    frozen_trunk: bool,
}

struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Uniform in `±sqrt(gain / fan_in)`.
    fn uniform(&mut self, shape: &[usize], fan_in: usize, gain: f64) -> Tensor {
        let limit = (gain / fan_in as f64).sqrt() as f32;
        Tensor::from_fn(shape, |_| self.rng.gen_range(-limit..=limit))
    }
}

/// ReLU layers use the He gain, everything else the LeCun gain.
const RELU_GAIN: f64 = 6.0;
const LINEAR_GAIN: f64 = 3.0;

impl ModelGraph {
    /// An empty graph; useful only as a neutral element.
    pub fn empty(variant: Variant, classes: usize) -> Self {
        Self {
            variant,
            classes,
            wiring: SequenceWiring::Sequential,
            layers: Vec::new(),
            params: IndexMap::new(),
            frozen_trunk: false,
        }
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn wiring(&self) -> SequenceWiring {
        self.wiring
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn is_trunk_frozen(&self) -> bool {
        self.frozen_trunk
    }

    pub fn set_trunk_frozen(&mut self, frozen: bool) {
        self.frozen_trunk = frozen;
    }

    pub fn params(&self) -> impl Iterator<Item = &ParamTensor> {
        self.params.values()
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut ParamTensor> {
        self.params.values_mut()
    }

    pub fn param(&self, name: &str) -> Option<&ParamTensor> {
        self.params.get(name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut ParamTensor> {
        self.params.get_mut(name)
    }

    pub(crate) fn value(&self, name: &str) -> &Tensor {
        &self.params.get(name).unwrap_or_else(|| panic!("parameter `{name}` missing")).value
    }

    pub(crate) fn accumulate(&mut self, name: &str, grad: &Tensor) {
        let p = self.params.get_mut(name).unwrap_or_else(|| panic!("parameter `{name}` missing"));
        debug_assert_eq!(p.grad.shape(), grad.shape());
        for (acc, g) in p.grad.data_mut().iter_mut().zip(grad.data()) {
            *acc += *g;
        }
    }

    /// Stage of the layer that owns `param`.
    pub fn stage_of(&self, param: &str) -> Option<Stage> {
        let layer = param.rsplit_once('.').map(|(l, _)| l)?;
        self.layers.iter().find(|l| l.name == layer).map(|l| l.stage)
    }

    /// Whether the optimizer may update `param`.
    pub fn is_trainable(&self, param: &str) -> bool {
        !(self.frozen_trunk && self.stage_of(param) == Some(Stage::Trunk))
    }

    /// Total number of scalar parameters.
    pub fn count_params(&self) -> usize {
        self.params.values().map(ParamTensor::numel).sum()
    }

    pub fn count_trainable(&self) -> usize {
        self.params.values().filter(|p| self.is_trainable(&p.name)).map(ParamTensor::numel).sum()
    }

    pub fn conv_layers(&self) -> usize {
        self.layers.iter().filter(|l| matches!(l.kind, LayerKind::Conv2d { .. })).count()
    }

    pub fn pool_layers(&self) -> usize {
        self.layers.iter().filter(|l| matches!(l.kind, LayerKind::MaxPool2)).count()
    }

    /// Width of the dense layer closing the trunk.
    pub fn trunk_width(&self) -> Option<usize> {
        self.layers.iter().rev().find_map(|l| match l.kind {
            LayerKind::Dense { units, .. } if l.stage == Stage::Trunk => Some(units),
            _ => None,
        })
    }

    pub fn head(&self, task: Task) -> Option<&Layer> {
        self.layers.iter().find(|l| matches!(l.kind, LayerKind::Head { task: t, .. } if t == task))
    }

    pub fn zero_grad(&mut self) {
        self.params.values_mut().for_each(ParamTensor::zero_grad);
    }

    /// Set every parameter to zero.
    pub fn zero_params(&mut self) {
        self.params.values_mut().for_each(|p| p.value.fill(0.0));
    }

    /// Human-readable layer table with per-layer parameter counts.
    pub fn summary(&self) -> String {
        let mut out = format!("{:<18} {:<10} {:<28} {:>12}\n", "layer", "stage", "op", "params");
        for layer in &self.layers {
            let count: usize = layer.param_names().iter().filter_map(|n| self.params.get(n)).map(ParamTensor::numel).sum();
            out.push_str(&format!(
                "{:<18} {:<10} {:<28} {:>12}\n",
                layer.name,
                format!("{:?}", layer.stage).to_lowercase(),
                layer.output_desc(),
                count
            ));
        }
        out.push_str(&format!("variant: {}  classes: {}\n", self.variant, self.classes));
        out.push_str(&format!("total parameters: {}\n", group_digits(self.count_params())));
        if self.frozen_trunk {
            out.push_str(&format!("trainable parameters: {}\n", group_digits(self.count_trainable())));
        }
        out
    }

    fn push(&mut self, name: impl Into<String>, kind: LayerKind, stage: Stage, tensors: Vec<Tensor>) {
        let layer = Layer { name: name.into(), kind, stage };
        for (pname, value) in layer.param_names().into_iter().zip(tensors) {
            let prev = self.params.insert(pname.clone(), ParamTensor::new(pname.clone(), value));
            assert!(prev.is_none(), "duplicate parameter `{pname}`");
        }
        self.layers.push(layer);
    }

    fn push_trunk(&mut self, init: &mut Init) {
        let mut cin = CHANNELS;
        let mut side = FRAME_SIZE;
        let mut conv = 0;
        for (block, widths) in CHANNEL_PLAN.iter().enumerate() {
            for &cout in widths.iter() {
                conv += 1;
                let fan_in = 9 * cin;
                let tensors = vec![init.uniform(&[3, 3, cin, cout], fan_in, RELU_GAIN), Tensor::zeros(&[cout])];
                self.push(format!("conv{conv}"), LayerKind::Conv2d { cin, cout }, Stage::Trunk, tensors);
                cin = cout;
            }
            self.push(format!("pool{}", block + 1), LayerKind::MaxPool2, Stage::Trunk, Vec::new());
            side /= 2;
        }
        let features = side * side * cin;
        self.push("flatten", LayerKind::Flatten { features }, Stage::Trunk, Vec::new());
        let tensors = vec![init.uniform(&[features, TRUNK_UNITS], features, RELU_GAIN), Tensor::zeros(&[TRUNK_UNITS])];
        let kind = LayerKind::Dense { inputs: features, units: TRUNK_UNITS, activation: Activation::Relu };
        self.push("trunk", kind, Stage::Trunk, tensors);
    }

    fn push_heads(&mut self, inputs: usize, init: &mut Init) {
        for task in Task::ALL {
            let (units, activation) = match task {
                Task::Arousal | Task::Valence => (1, Activation::Tanh),
                Task::Expression => (self.classes, Activation::Softmax),
            };
            let tensors = vec![init.uniform(&[inputs, units], inputs, LINEAR_GAIN), Tensor::zeros(&[units])];
            let kind = LayerKind::Head { task, inputs, units, activation };
            self.push(format!("head.{}", task.name()), kind, Stage::Head, tensors);
        }
    }

    fn push_sequence(&mut self, init: &mut Init) {
        let width = TRUNK_UNITS + LSTM_UNITS;
        let mut tensors: Vec<Tensor> =
            (0..GATES).map(|_| init.uniform(&[width, LSTM_UNITS], width, LINEAR_GAIN)).collect();
        for gate in 0..GATES {
            let fill = if gate == FORGET { 1.0 } else { 0.0 };
            tensors.push(Tensor::full(&[LSTM_UNITS], fill));
        }
        let kind = LayerKind::Lstm { inputs: TRUNK_UNITS, units: LSTM_UNITS };
        self.push("lstm", kind, Stage::Sequence, tensors);
        let tensors = vec![
            init.uniform(&[LSTM_UNITS, SEQ_DENSE_UNITS], LSTM_UNITS, RELU_GAIN),
            Tensor::zeros(&[SEQ_DENSE_UNITS]),
        ];
        let kind = LayerKind::Dense { inputs: LSTM_UNITS, units: SEQ_DENSE_UNITS, activation: Activation::Relu };
        self.push("seq_dense", kind, Stage::Sequence, tensors);
    }

    fn sequence_head_inputs(wiring: SequenceWiring) -> usize {
        match wiring {
            SequenceWiring::Sequential => SEQ_DENSE_UNITS,
            SequenceWiring::Concat => LSTM_UNITS + SEQ_DENSE_UNITS,
        }
    }

    fn trunk_params(&self) -> impl Iterator<Item = &ParamTensor> {
        self.params.values().filter(|p| self.stage_of(&p.name) == Some(Stage::Trunk))
    }
}

/// The frame-level network with `classes` expression outputs.
/// `2235537` → `"2,235,537"`.
pub fn group_digits(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

pub fn build_facechannel(classes: usize, seed: u64) -> Result<ModelGraph> {
    if classes < 2 {
        return Err(Error::Invalid(format!("need at least 2 expression classes, got {classes}")));
    }
    let mut init = Init::new(seed);
    let mut graph = ModelGraph::empty(Variant::Frame, classes);
    graph.push_trunk(&mut init);
    graph.push_heads(TRUNK_UNITS, &mut init);
    Ok(graph)
}

/// Derive the sequence network from a frame network.
///
/// The trunk is copied from `base`; LSTM, dense and heads are freshly
/// initialised from `seed`.
pub fn build_facechannels(base: &ModelGraph, mode: TrunkMode, wiring: SequenceWiring, seed: u64) -> Result<ModelGraph> {
    if base.variant != Variant::Frame {
        return Err(Error::Invalid("sequence model must be derived from a frame model".into()));
    }
    let mut graph = ModelGraph::empty(Variant::Sequence, base.classes);
    graph.wiring = wiring;
    for layer in base.layers.iter().filter(|l| l.stage == Stage::Trunk) {
        let tensors = layer.param_names().iter().map(|n| base.value(n).clone()).collect();
        graph.push(layer.name.clone(), layer.kind.clone(), Stage::Trunk, tensors);
    }
    debug_assert_eq!(graph.trunk_params().count(), base.trunk_params().count());
    let mut init = Init::new(seed);
    graph.push_sequence(&mut init);
    graph.push_heads(ModelGraph::sequence_head_inputs(wiring), &mut init);
    graph.frozen_trunk = mode == TrunkMode::Freeze;
    Ok(graph)
}

/// A randomly initialised sequence network, without a pretrained trunk.
pub(crate) fn build_sequence_skeleton(classes: usize, wiring: SequenceWiring) -> Result<ModelGraph> {
    let base = build_facechannel(classes, 0)?;
    build_facechannels(&base, TrunkMode::FineTune, wiring, 0)
}
