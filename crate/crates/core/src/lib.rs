//! Variational Monte Carlo for small atoms and molecules, with the family of
//! stochastic-reconfiguration optimizers built around a low-rank, averaged
//! S-matrix maintained by warm-started subspace iteration (WSSR).
//!
//! The crate is `no_std` and only needs `alloc`. Everything here is pure
//! computation; file formats, configuration and the command-line runner live
//! in the `wssr-cli` crate.
//!
//! Module map:
//!
//! - [`linalg`]: dense column-major matrices, QR, one-sided Jacobi SVD,
//!   Cholesky and LU solves.
//! - [`svd`]: truncated SVD by subspace iteration and by randomized sketching,
//!   plus the consecutive-factorization drift diagnostics.
//! - [`system`]: nuclei, electron configurations, the Coulomb potential and the
//!   local energy.
//! - [`wavefunction`]: the ACE backflow-determinant ansatz with a Jastrow
//!   factor.
//! - [`sampler`]: Metropolis-Hastings walkers sampling `|Psi|^2`.
//! - [`estimators`]: clipping and assembly of the O-matrix, L-vector and
//!   gradient from a sample batch.
//! - [`optimizers`]: SGD, SR, MinSR, SPRING, WSSR and RSSR.
//! - [`vmc`]: the outer optimization loop and per-step trace records.
#![no_std]
#![deny(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

mod error;
pub mod estimators;
pub mod linalg;
pub mod optimizers;
pub mod sampler;
pub mod svd;
pub mod system;
pub mod vmc;
pub mod wavefunction;

pub use error::{Error, Result};
