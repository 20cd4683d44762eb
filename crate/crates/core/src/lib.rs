//! Decoupled-variance adaptive optimizers (DeVA) with coordinate-wise and
//! spectral variants, the baselines they are compared against, and a
//! seed-replicated benchmark harness on trace quadratics.

pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod msign;
pub mod optimizers;
pub mod problems;

pub use error::{Error, Result};
pub use linalg::DenseMatrix;
