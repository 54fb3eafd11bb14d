//! FaceChannel and FaceChannelS facial-affect networks.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`] and [`ops`]: a small NHWC tensor core with hand-written
//!   backward passes, checked against finite differences by [`gradcheck`].
//! * [`model`]: the frame-level network (ten 3×3 convolutions, four pools, a
//!   500-unit trunk, three heads) and its sequence extension (LSTM(100) and
//!   dense(100) over ten-frame clips), plus the `FCW1` weights format.
//! * [`data`]: manifest parsing, label-coherence filtering, class and
//!   valence-bin balancing, augmentation, clip windowing and image decoding.
//! * [`metrics`]: concordance correlation, Pearson, accuracy and F1.
//! * [`train`]: multi-task losses, Adam, the epoch loop and checkpoints.

pub mod data;
pub mod error;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod ops;
pub mod tensor;
pub mod train;

pub use error::{Error, ErrorKind, Result};
pub use tensor::{ParamTensor, Real, Tensor};

