//! Deterministic federated-learning simulator with server-side,
//! explanation-guided structured pruning.
//!
//! The global model is trained with federated averaging. After a warm-up
//! phase the server scores every prunable unit (conv filter or dense
//! neuron) on a reference set with layer-wise relevance propagation or
//! integrated gradients, masks the least relevant fraction and keeps that
//! mask for the rest of training. A ledger tracks every byte sent.

pub mod data;
pub mod error;
pub mod federation;
pub mod nn;
pub mod pruning;
pub mod relevance;
pub mod rng;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::Tensor;
