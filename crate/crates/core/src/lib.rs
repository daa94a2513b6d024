//! Multi-level block-structure rearrangement: scene generation, dependency-graph
//! learning with a graph-attention encoder, and ordered plan construction and execution.

pub mod align;
pub mod depgraph;
pub mod error;
pub mod geometry;
pub mod graphnet;
pub mod planexec;
pub mod scenegen;

pub use error::{Error, Result};
