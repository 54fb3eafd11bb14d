//! Forward and analytic backward passes for every layer primitive.

pub mod activation;
pub mod conv;
pub mod dense;
pub mod loss;
pub mod lstm;
pub mod pool;

pub use activation::{relu, relu_backward, sigmoid, sigmoid_backward, softmax, softmax_backward, tanh_act, tanh_backward};
pub use conv::{conv2d, conv2d_backward, Conv2dGrads};
pub use dense::{dense, dense_backward, DenseGrads};
pub use loss::{cross_entropy, mse};
pub use lstm::{GATES, GATE_NAMES, lstm_step, lstm_step_backward, LstmParams, LstmStepCache, LstmStepGrads};
pub use pool::{maxpool2, maxpool2_backward, Pooled};
