//! Fixed and learnable activation functions (ReLU through the Mexican-hat
//! MeLU), a small convolutional network with hand-written backpropagation,
//! and the cross-validated activation-ensemble evaluation protocol built on
//! top of them.
//!
//! The crate is organised bottom-up:
//!
//! * [`activations`] and [`basis`]: scalar kernels and the fixed hat schedule.
//! * [`nn`]: tensors, layers, parameter groups, SGD and training.
//! * [`ensemble`]: score matrices and sum-rule fusion.
//! * [`eval`]: folds, augmentation, the signed-rank test and experiments.
//! * [`data`], [`config`], [`gradcheck`]: plumbing used by the CLI.

pub mod activations;
pub mod basis;
pub mod config;
pub mod data;
pub mod ensemble;
mod error;
pub mod eval;
pub mod gradcheck;
pub mod nn;
pub mod seed;

pub use activations::{Activation, ActivationFamily, ActivationKind, GradientMode};
pub use basis::{build_melu_basis, Hat, MexicanHatBasis};
pub use data::Dataset;
pub use ensemble::{ModelId, ScoreMatrix};
pub use error::{Error, Location, Result};
pub use nn::{Network, NetworkSpec, TrainConfig};
