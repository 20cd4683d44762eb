//! Dense linear algebra used by every other module.

mod decomp;
mod matrix;
mod rng;

pub use decomp::{cholesky, kron, qr_orthonormalize, svd, sym_eig, EigenPair, SvdTriple};
pub use matrix::DenseMatrix;
pub use rng::{rng_gaussian, Rng};
