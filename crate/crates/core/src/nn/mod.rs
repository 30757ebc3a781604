//! The ε network: features, parameters, reverse-mode tape and the model.

pub mod features;
pub mod model;
pub mod params;
pub mod tape;

pub use model::{parameter_count, DenoiserConfig, DenoiserModel, GraphBatch, LossKind, NodeState, SurfaceMode, Trace};
pub use params::{ParameterSet, Tensor};
