//! Minimal neural-network engine: layers, forward/backward passes,
//! flat parameter storage and component enumeration.

mod backward;
pub mod checkpoint;
pub(crate) mod kernels;
mod layer;
mod network;
mod params;

pub use backward::Gradients;
pub use layer::{ArchConfig, LayerKind, LayerSpec};
pub use network::{ComponentId, ForwardTrace, Network};
pub use params::{LayerParams, ParamLayout, ParamVector};
