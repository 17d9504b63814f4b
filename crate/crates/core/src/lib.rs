//! Hierarchical temporal knowledge graphs for event recognition over
//! sequences of entity-interaction graphs.

pub mod classifier;
pub mod config;
pub mod datasets;
pub mod diagnostics;
pub mod error;
pub mod evaluation;
pub mod event_model;
pub mod graph;
pub mod hierarchy;
pub mod model;
pub mod numerics;
pub mod pipeline;
pub mod train;

pub use error::{Error, Result};
