use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Coarse classification used by the command line to choose an exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad input values, configuration, or shapes.
    Validation,
    /// Files that cannot be read, written, or decoded.
    Io,
    /// A broken internal invariant (non-finite gradients, failed checks).
    Internal,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShapeError {
    #[error("{op}: expected {expected}, got {got}")]
    Mismatch { op: &'static str, expected: String, got: String },
    #[error("shape {shape:?} holds {} elements but data has {len}", shape.iter().product::<usize>())]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("shape {shape:?} has a zero dimension")]
    ZeroDim { shape: Vec<usize> },
    #[error("{op}: empty input")]
    Empty { op: &'static str },
}

impl ShapeError {
    pub(crate) fn mismatch(op: &'static str, expected: impl Into<String>, got: impl Into<String>) -> Self {
        ShapeError::Mismatch { op, expected: expected.into(), got: got.into() }
    }
}

#[derive(Debug, Error)]
pub enum WeightsError {
    #[error("weights i/o on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("bad magic: expected \"FCW1\", found {found:?}")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported weights format version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated weights file while reading {context}")]
    Truncated { context: String },
    #[error("shape mismatch for tensor `{name}`: expected {expected:?}, found {found:?}")]
    ShapeMismatch { name: String, expected: Vec<usize>, found: Vec<usize> },
    #[error("tensor `{0}` missing from weights file")]
    MissingTensor(String),
    #[error("unexpected tensor `{0}` in weights file")]
    UnknownTensor(String),
    #[error("duplicate tensor `{0}` in weights file")]
    DuplicateTensor(String),
    #[error("malformed record: {0}")]
    Malformed(String),
    #[error("weights do not describe a known architecture: {0}")]
    Layout(String),
}

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("cannot read image {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("wrong magic: expected P6")]
    BadMagic,
    #[error("malformed PPM header: {0}")]
    BadHeader(String),
    #[error("unsupported maxval {0} (only 255)")]
    Maxval(u32),
    #[error("wrong dimensions {width}x{height}, expected 120x120")]
    Dimensions { width: usize, height: usize },
    #[error("short file: expected {expected} bytes of pixel data, found {found}")]
    Short { expected: usize, found: usize },
    #[error("raw image value {value} at index {index} outside [0,1]")]
    ValueRange { index: usize, value: f32 },
    #[error("unsupported image extension for {0}")]
    Extension(PathBuf),
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("manifest header is missing column `{0}`")]
    MissingColumn(&'static str),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate sample (video `{video}`, frame {frame}) on lines {first_line} and {second_line}")]
    Duplicate { video: String, frame: u64, first_line: usize, second_line: usize },
    #[error("classes with zero samples: {0:?}")]
    EmptyClasses(Vec<usize>),
    #[error("valence {0} outside [-1,1]")]
    ValenceRange(f32),
    #[error("class id {class} outside [0,{classes})")]
    ClassRange { class: usize, classes: usize },
    #[error("bad augmentation recipe `{0}`")]
    Recipe(String),
    #[error(transparent)]
    Image(#[from] ImageError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("length mismatch: {0} predictions vs {1} annotations")]
    LengthMismatch(usize, usize),
    #[error("class {class} outside [0,{classes})")]
    ClassOutOfRange { class: usize, classes: usize },
    #[error("non-finite value in series")]
    NonFinite,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid value for `{key}`: {message}")]
    Value { key: String, message: String },
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("empty {0} set")]
    EmptySet(&'static str),
    #[error("sequence model training needs a base frame checkpoint")]
    MissingBase,
    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },
    #[error("model variant does not match the data: {0}")]
    VariantMismatch(String),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

/// Crate-wide error.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Weights(#[from] WeightsError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("invalid argument: {0}")]
    Invalid(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Weights(_) | Error::Image(_) => ErrorKind::Io,
            Error::Data(DataError::Io { .. } | DataError::Image(_)) => ErrorKind::Io,
            Error::Config(ConfigError::Io { .. }) => ErrorKind::Io,
            Error::Train(TrainError::Io { .. }) => ErrorKind::Io,
            Error::Train(TrainError::NonFiniteGradient(_) | TrainError::NonFiniteLoss { .. }) => {
                ErrorKind::Internal
            }
            _ => ErrorKind::Validation,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
