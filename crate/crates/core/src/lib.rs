//! Edge-based pose refinement over directional distance-transform tensors,
//! plus building-plane estimation and clustering of localized detections.

pub mod bim;
pub mod cluster;
pub mod edges;
pub mod error;
pub mod mesh;
pub mod pose;
pub mod refine;
pub mod tensor;

pub use error::{Error, Result};
