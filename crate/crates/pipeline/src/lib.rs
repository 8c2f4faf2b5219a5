//! Synthetic scenes, the end-to-end lamp detection pipeline and the method
//! benchmark built on `lampdet_core`.

pub mod config;
pub mod error;
pub mod render;
pub mod run;
pub mod scene;

pub use config::Config;
pub use error::{PipelineError, Result};
