//! Contrastive CATE estimation on structured treatment spaces.
//!
//! The library is organized around a small hand-rolled neural network engine
//! (`tensor`, `nn`), linear-SCM data generators with known ground truth
//! (`scm`), outcome-bucketed triplet mining (`mining`), the two CATE
//! estimators (`model`), and the evaluation/diagnostic layer (`eval`).
//! Everything is deterministic given a seed; see [`rng::Rng`].

pub mod error;
pub mod eval;
pub mod io;
pub mod linalg;
pub mod mining;
pub mod model;
pub mod nn;
pub mod plot;
pub mod rng;
pub mod scm;
pub mod tensor;

pub use error::{Error, Result};
