//! Linear CCA, Deep CCA and noise-regularized Deep CCA for multi-view
//! representation learning, with a synthetic benchmark generator and the
//! diagnostics used to study representation collapse.

pub mod correlation;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod linalg;
pub mod models;
pub mod noise;
pub mod seeds;
pub mod synthgen;

pub use error::{Error, Result};
pub use linalg::Matrix;
