//! Inverse dynamics models of controlled Markov processes: forward and
//! inverse model tensors, solvers that recover a process from its inverse
//! models, identifiability analysis, a 1-in-3-SAT encoding and a planner.

pub mod analysis;
pub mod error;
pub mod experiments;
pub mod generators;
pub mod linalg;
pub mod linear;
pub mod model;
pub mod planner;
pub mod relaxation;
pub mod rng;
pub mod sat;

pub use error::{Error, Result};
pub use linalg::Threshold;
pub use model::*;
