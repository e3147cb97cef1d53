//! A neural-network engine with no backpropagation in training.
//!
//! Layers learn with a local competitive rule: each weight update depends
//! only on that layer's input and output, yet a layer converges to an
//! orthonormal basis of the top principal subspace of its input — it learns
//! the best linear compression without ever being given an error signal.
//! Stacking layers with magnitude-preserving activations yields a network
//! whose output activation `||y||^2` measures how typical an input is, and
//! all inference — classification, generation, completion, anomaly
//! detection — is activation maximization over that single quantity.
//!
//! The crate is generic over the scalar type (`f32` for model state, `f64`
//! for verification oracles); see the [`Mat32`]/[`Mat64`] and
//! [`Model32`]/[`Model64`] aliases.

pub mod data;
pub mod error;
pub mod inference;
pub mod layers;
pub mod network;
pub mod numerics;
pub mod rule;

pub use error::{Error, Result};

/// `f32` matrix, the usual model storage type.
pub type Mat32 = numerics::Mat<f32>;
/// `f64` matrix, the usual oracle/verification type.
pub type Mat64 = numerics::Mat<f64>;
/// `f32` network model, the usual trained-model type.
pub type Model32 = network::NetworkModel<f32>;
/// `f64` network model, for high-precision verification runs.
pub type Model64 = network::NetworkModel<f64>;
