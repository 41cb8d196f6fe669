//! Robustness toolkit for small text classifiers: word-substitution attacks,
//! representation-level mixup, adversarial data augmentation and the static /
//! targeted evaluation protocols that measure what the augmentation bought.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below pin the two concrete instantiations most callers want.
//! All randomness flows from a single master seed through named streams
//! (see [`seeds`]), so every artifact is reproducible byte for byte.

pub mod artifacts;
pub mod attack;
pub mod augment;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod mixup;
pub mod model;
pub mod scalar;
pub mod seeds;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Single-precision parameter matrix.
pub type Mat32 = linalg::Mat<f32>;
/// Double-precision parameter matrix.
pub type Mat64 = linalg::Mat<f64>;
/// Single-precision model parameters.
pub type ModelParams32 = model::ModelParams<f32>;
/// Double-precision model parameters.
pub type ModelParams64 = model::ModelParams<f64>;
/// Single-precision class distribution.
pub type Prediction32 = model::Prediction<f32>;
/// Double-precision class distribution.
pub type Prediction64 = model::Prediction<f64>;
/// Single-precision checkpoint container.
pub type Checkpoint32 = model::Checkpoint<f32>;
/// Double-precision checkpoint container.
pub type Checkpoint64 = model::Checkpoint<f64>;
/// Single-precision virtual example.
pub type VirtualExample32 = mixup::VirtualExample<f32>;
/// Double-precision virtual example.
pub type VirtualExample64 = mixup::VirtualExample<f64>;
