//! Dense matrix primitives and the exact reference decompositions.
//!
//! All reductions use a fixed accumulation order, so every routine here is
//! bitwise deterministic for a given input.

mod decompose;
mod matrix;

pub use decompose::{
    exact_svd, qr_orthonormalize, spd_solve, LuFactorization, QrFactors, SpdFactorization, Svd,
};
pub use matrix::{axpy, dot, norm2, DenseMatrix};

use rand::Rng;
use rand_distr::StandardNormal;

/// Matrix with i.i.d. standard normal entries drawn column by column.
pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}
