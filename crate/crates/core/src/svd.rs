//! Truncated SVD of the streamed matrix `O_hat` by subspace iteration (with
//! optional warm start) and by randomized range sketching.

use alloc::vec::Vec;

// Float math for no_std; unused when a dependency links std.
#[cfg(not(test))]
#[allow(unused_imports)]
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::linalg::{dot, exact_svd, gaussian_matrix, qr_orthonormalize, DenseMatrix};
use crate::{Error, Result};

/// Rank-`r` factorization `O_hat ~= U diag(sigma) V`.
///
/// `u` is `M x r` with orthonormal columns, `sigma` is strictly positive and
/// nonincreasing, and `v` is `r x n` with orthonormal rows.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedSvd {
    pub u: DenseMatrix,
    pub sigma: Vec<f64>,
    pub v: DenseMatrix,
}

impl TruncatedSvd {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// Keeps the leading `r` triplets.
    pub fn truncated(&self, r: usize) -> TruncatedSvd {
        let r = r.min(self.rank());
        TruncatedSvd {
            u: self.u.leading_columns(r),
            sigma: self.sigma[..r].to_vec(),
            v: self.v.leading_rows(r),
        }
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        let mut us = self.u.clone();
        for (j, s) in self.sigma.iter().enumerate() {
            us.column_mut(j).iter_mut().for_each(|x| *x *= s);
        }
        us.matmul(&self.v)
    }

    /// Builds the factorization from left vectors, singular values and the
    /// transposed right vectors (`n x r`), dropping triplets whose singular
    /// value is at rounding level relative to the largest.
    fn from_parts(u: DenseMatrix, sigma: Vec<f64>, v_cols: DenseMatrix) -> TruncatedSvd {
        let dim = u.rows().max(v_cols.rows()) as f64;
        let floor = sigma.first().copied().unwrap_or(0.0) * f64::EPSILON * dim;
        let keep = sigma.iter().take_while(|&&s| s > floor && s > 0.0).count();
        TruncatedSvd {
            u: u.leading_columns(keep),
            sigma: sigma[..keep].to_vec(),
            v: v_cols.leading_columns(keep).transpose(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsiReport {
    pub iterations_used: usize,
    /// `||A A^T Q - Q (Q^T A A^T Q)||_F / ||A||_F^2` for the final iterate.
    pub subspace_residual: f64,
    pub warm_started: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsiOptions {
    pub max_iters: usize,
    /// Early exit once the subspace residual drops below this.
    pub tolerance: f64,
    /// Seed for the random orthonormal start when no initial guess is given.
    pub cold_seed: u64,
}

impl Default for SsiOptions {
    fn default() -> Self {
        Self {
            max_iters: 3,
            tolerance: 1e-10,
            cold_seed: 0x5eed,
        }
    }
}

fn check_rank(ohat: &DenseMatrix, rank: usize) -> Result<()> {
    let max = ohat.rows().min(ohat.cols());
    if rank == 0 {
        return Err(Error::InvalidParameter("rank must be positive"));
    }
    if rank > max {
        return Err(Error::RankTooLarge {
            requested: rank,
            max,
        });
    }
    Ok(())
}

fn check_input(ohat: &DenseMatrix) -> Result<f64> {
    if !ohat.is_finite() {
        return Err(Error::NonFinite("svd input"));
    }
    let norm = ohat.frobenius_norm();
    if norm == 0.0 {
        return Err(Error::DegenerateInput);
    }
    Ok(norm)
}

/// Dominant `rank` singular triplets of `ohat` by simple subspace iteration.
///
/// Each iteration orthonormalizes the current block `U`, then forms
/// `V = O_hat^T Q` and `U = O_hat V`. The loop stops after `max_iters`
/// iterations or as soon as the subspace residual of `Q` drops below the
/// tolerance. The factors are then read off the final QR `V = Q_v R`: the
/// small triangular `R^T` is diagonalized by SVD so that the returned
/// triplets are the best rank-`rank` approximation within the converged
/// subspace. At convergence `R` is diagonal and this reduces to sorting
/// `|diag(R)|`.
///
/// `u_init`, when given, must have `M` rows; it is truncated or padded to
/// `rank` columns and re-orthonormalized.
pub fn ssi_svd(
    ohat: &DenseMatrix,
    rank: usize,
    u_init: Option<&DenseMatrix>,
    opts: &SsiOptions,
) -> Result<(TruncatedSvd, SsiReport)> {
    check_rank(ohat, rank)?;
    let norm = check_input(ohat)?;
    if opts.max_iters == 0 {
        return Err(Error::InvalidParameter("max_iters must be positive"));
    }
    let m = ohat.rows();
    let mut block = match u_init {
        Some(u0) => {
            if u0.rows() != m {
                return Err(Error::DimensionMismatch("initial guess rows"));
            }
            if u0.cols() >= rank {
                u0.leading_columns(rank)
            } else {
                u0.pad_columns(rank)
            }
        }
        None => gaussian_matrix(m, rank, &mut ChaCha8Rng::seed_from_u64(opts.cold_seed)),
    };
    if block.frobenius_norm() == 0.0 {
        block = DenseMatrix::identity(m).leading_columns(rank);
    }

    let scale = 1.0 / (norm * norm);
    let mut q = DenseMatrix::zeros(m, rank);
    let mut v = DenseMatrix::zeros(ohat.cols(), rank);
    let mut residual = f64::INFINITY;
    let mut used = 0;
    for _ in 0..opts.max_iters {
        q = qr_orthonormalize(&block)?.q;
        v = ohat.t_matmul(&q);
        block = ohat.matmul(&v);
        used += 1;
        residual = subspace_residual(&q, &block) * scale;
        if residual < opts.tolerance {
            break;
        }
    }

    let svd = rayleigh_ritz(&q, &v)?;
    Ok((
        svd,
        SsiReport {
            iterations_used: used,
            subspace_residual: residual,
            warm_started: u_init.is_some(),
        },
    ))
}

/// `||W - Q (Q^T W)||_F` for orthonormal `Q`.
fn subspace_residual(q: &DenseMatrix, w: &DenseMatrix) -> f64 {
    let proj = q.t_matmul(w);
    w.sub(&q.matmul(&proj)).frobenius_norm()
}

/// Given orthonormal `Q` and `V = O_hat^T Q`, returns the SVD of
/// `Q Q^T O_hat` via the QR of `V`.
fn rayleigh_ritz(q: &DenseMatrix, v: &DenseMatrix) -> Result<TruncatedSvd> {
    let qr = qr_orthonormalize(v)?;
    // Q^T O_hat = V^T = R^T Q_v^T, so only the r x r factor R^T needs an SVD.
    let small = exact_svd(&qr.r.transpose())?;
    let u = q.matmul(&small.u);
    let v_cols = qr.q.matmul(&small.vt.transpose());
    Ok(TruncatedSvd::from_parts(u, small.sigma, v_cols))
}

/// Rank-`rank` factorization by Gaussian range sketching with `oversample`
/// extra columns. Deterministic for a given seed.
pub fn randomized_svd(
    ohat: &DenseMatrix,
    rank: usize,
    oversample: usize,
    seed: u64,
) -> Result<TruncatedSvd> {
    check_rank(ohat, rank + oversample)?;
    check_input(ohat)?;
    let width = rank + oversample;
    let omega = gaussian_matrix(ohat.cols(), width, &mut ChaCha8Rng::seed_from_u64(seed));
    let y = ohat.matmul(&omega);
    let q = qr_orthonormalize(&y)?.q;
    let b = q.t_matmul(ohat);
    let small = exact_svd(&b)?;
    let u = q.matmul(&small.u.leading_columns(rank));
    let v_cols = small.vt.leading_rows(rank).transpose();
    Ok(TruncatedSvd::from_parts(u, small.sigma[..rank].to_vec(), v_cols))
}

/// Reference factorization: exact SVD truncated to `rank`.
pub fn exact_truncated_svd(ohat: &DenseMatrix, rank: usize) -> Result<TruncatedSvd> {
    check_rank(ohat, rank)?;
    check_input(ohat)?;
    let full = exact_svd(ohat)?;
    let v_cols = full.vt.leading_rows(rank).transpose();
    Ok(TruncatedSvd::from_parts(
        full.u.leading_columns(rank),
        full.sigma[..rank].to_vec(),
        v_cols,
    ))
}

/// Change between consecutive factorizations: the Euclidean norm of the
/// singular value difference and the spectral norm of `U1 U1^T - U2 U2^T`.
///
/// Both are computed on the common leading rank. The projector distance uses
/// `||(I - U1 U1^T) U2||_2`, which equals the projector difference for equal
/// ranks without forming any `M x M` matrix.
pub fn subspace_drift(prev: &TruncatedSvd, curr: &TruncatedSvd) -> (f64, f64) {
    let r = prev.rank().min(curr.rank());
    if r == 0 {
        return (0.0, 0.0);
    }
    let sigma_drift = prev.sigma[..r]
        .iter()
        .zip(&curr.sigma[..r])
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let u1 = prev.u.leading_columns(r);
    let u2 = curr.u.leading_columns(r);
    let w = u2.sub(&u1.matmul(&u1.t_matmul(&u2)));
    let gram = w.gram();
    let top = exact_svd(&gram).map(|s| s.sigma[0]).unwrap_or(0.0);
    (sigma_drift, top.max(0.0).sqrt())
}

/// Sum of squared singular values captured, `||U^T A||_F^2`.
pub fn captured_energy(u: &DenseMatrix, a: &DenseMatrix) -> f64 {
    let p = u.t_matmul(a);
    dot(p.as_slice(), p.as_slice())
}
