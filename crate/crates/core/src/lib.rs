//! Distance metric learning from manifold structural neighborhoods.
//!
//! Training data is embedded with a manifold or linear backend, each sample
//! gets balanced similar/dissimilar neighbor sets in that embedding, and an
//! ε-dragging least-squares regression learns an affine map of the original
//! features into a similarity space where k-NN classification runs.

pub mod classify;
pub mod data;
pub mod embedding;
pub mod error;
pub mod harness;
pub mod metric;
pub mod neighborhood;
pub mod numeric;

pub use error::{Error, Result, Stage};
