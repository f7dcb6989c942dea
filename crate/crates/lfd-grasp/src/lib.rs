//! Robust learning-from-demonstration for grasp policies.
//!
//! The pipeline filters inconsistent demonstrations with a pair of one-class
//! SVMs (demonstration space and state space), then learns a per-dimension
//! epsilon-insensitive SVR policy over the consistent subset. A synthetic
//! grasping world provides reproducible data generation and an end-to-end
//! success oracle.

pub mod consistency;
pub mod error;
pub mod eval;
pub mod kernel;
pub mod model;
pub mod novelty;
pub mod perception;
pub mod policy;
pub mod qp;
pub mod synth;

pub use error::{Error, Result};
