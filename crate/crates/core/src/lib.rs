//! XBNet: dense feed-forward classifiers whose weights are updated by
//! gradient descent and then nudged by the feature importance of a
//! gradient-boosted tree refit on each layer's activations.
//!
//! Matrices that carry samples use one column per sample.

// `!(a < b)` is used on purpose so NaN inputs take the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod gbdt;
pub mod metrics;
pub mod network;
pub mod numeric;
pub mod optimizer;

pub use data::{Dataset, Samples, Schema};
pub use gbdt::{GbtConfig, GbtModel, ImportanceVector};
pub use network::{Activation, XbnetModel};
pub use numeric::{Matrix, NumericError, Rng};
pub use optimizer::{train, TrainConfig, TrainTrace, Trainer};
