//! A small feed-forward / convolutional network with explicit backward
//! passes, per-group SGD and a softmax cross-entropy head.

mod layers;
mod network;
mod optim;
mod tensor;
mod train;

pub use network::{ForwardCache, LayerSpec, Network, NetworkSpec};
pub use optim::{sgd_step, ParamGroup};
pub use tensor::Tensor;
pub use train::{predict_scores, softmax_rows, train, train_with, TrainConfig, TrainReport};
