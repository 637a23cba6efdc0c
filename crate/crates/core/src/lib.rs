//! Probabilistic selection of closed-form models.
//!
//! Models are expression trees scored by their description length
//! `H(m) = B(m)/2 - ln p(m)` (BIC plus a maximum-entropy structure prior).
//! A Metropolis sampler over trees finds the minimum description length
//! model; the [`phase`] module runs planted-model experiments that map out
//! when the generating model can be recovered from noisy data.

pub mod config;
pub mod error;
pub mod exprtree;
pub mod inference;
pub mod phase;
pub mod prior;
pub mod sampler;
pub mod seed;

pub use error::{Error, Result};
