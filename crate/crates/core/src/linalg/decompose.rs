use alloc::vec;
use alloc::vec::Vec;

// Float math for no_std; unused when a dependency links std.
#[cfg(not(test))]
#[allow(unused_imports)]
use num_traits::Float;

use super::matrix::{axpy, dot, norm2, DenseMatrix};
use crate::{Error, Result};

/// Thin QR factors `A = Q R` with `diag(R) >= 0`.
#[derive(Clone, Debug)]
pub struct QrFactors {
    pub q: DenseMatrix,
    pub r: DenseMatrix,
}

/// Orthonormalizes the columns of `a` (rows >= cols) by modified Gram-Schmidt
/// with one reorthogonalization pass.
///
/// A column whose remainder falls below `1e-12 * ||A||_F` is treated as
/// linearly dependent: its `R` diagonal is zero and the corresponding `Q`
/// column is filled with the first canonical basis vector that survives
/// orthogonalization against the earlier columns.
pub fn qr_orthonormalize(a: &DenseMatrix) -> Result<QrFactors> {
    let (m, n) = (a.rows(), a.cols());
    if m < n {
        return Err(Error::DimensionMismatch("qr requires rows >= cols"));
    }
    let anorm = a.frobenius_norm();
    if !anorm.is_finite() {
        return Err(Error::NonFinite("qr input"));
    }
    if anorm < 1e-300 {
        return Err(Error::ZeroMatrix);
    }
    let mut q = a.clone();
    let mut r = DenseMatrix::zeros(n, n);
    let mut next_canonical = 0usize;
    let mut v = vec![0.0; m];
    for j in 0..n {
        v.copy_from_slice(q.column(j));
        for _pass in 0..2 {
            for i in 0..j {
                let c = dot(q.column(i), &v);
                r[(i, j)] += c;
                axpy(-c, q.column(i), &mut v);
            }
        }
        let norm = norm2(&v);
        if norm >= 1e-12 * anorm {
            r[(j, j)] = norm;
            let inv = 1.0 / norm;
            for (dst, src) in q.column_mut(j).iter_mut().zip(&v) {
                *dst = src * inv;
            }
        } else {
            r[(j, j)] = 0.0;
            next_canonical = fill_canonical(&mut q, j, next_canonical, &mut v);
        }
    }
    Ok(QrFactors { q, r })
}

/// Replaces column `j` of `q` with a canonical vector orthogonalized against
/// columns `0..j`. Returns the index to resume the canonical search from.
fn fill_canonical(q: &mut DenseMatrix, j: usize, start: usize, v: &mut [f64]) -> usize {
    let m = q.rows();
    let mut best: Option<(usize, f64)> = None;
    for t in (start..m).chain(0..start) {
        v.iter_mut().for_each(|x| *x = 0.0);
        v[t] = 1.0;
        for _pass in 0..2 {
            for i in 0..j {
                let c = dot(q.column(i), v);
                axpy(-c, q.column(i), v);
            }
        }
        let norm = norm2(v);
        if norm > 0.5 {
            best = Some((t, norm));
            break;
        }
        if best.map_or(true, |(_, b)| norm > b) {
            best = Some((t, norm));
        }
    }
    let (t, _) = best.expect("q has at least one row");
    // Recompute for the chosen index (the loop may have moved past it).
    v.iter_mut().for_each(|x| *x = 0.0);
    v[t] = 1.0;
    for _pass in 0..2 {
        for i in 0..j {
            let c = dot(q.column(i), v);
            axpy(-c, q.column(i), v);
        }
    }
    let inv = 1.0 / norm2(v);
    for (dst, src) in q.column_mut(j).iter_mut().zip(v.iter()) {
        *dst = src * inv;
    }
    (t + 1) % m
}

/// Thin singular value decomposition `A = U diag(sigma) Vt` with
/// `k = min(rows, cols)` singular triplets in nonincreasing order.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: DenseMatrix,
    pub sigma: Vec<f64>,
    pub vt: DenseMatrix,
}

impl Svd {
    pub fn reconstruct(&self) -> DenseMatrix {
        let mut us = self.u.clone();
        for (j, s) in self.sigma.iter().enumerate() {
            us.column_mut(j).iter_mut().for_each(|x| *x *= s);
        }
        us.matmul(&self.vt)
    }
}

const JACOBI_MAX_SWEEPS: usize = 80;

/// Singular value decomposition by one-sided (Hestenes) Jacobi rotations.
///
/// Serves as the reference factorization for every truncated method.
pub fn exact_svd(a: &DenseMatrix) -> Result<Svd> {
    if !a.is_finite() {
        return Err(Error::NonFinite("svd input"));
    }
    if a.rows() >= a.cols() {
        jacobi_tall(a)
    } else {
        let t = jacobi_tall(&a.transpose())?;
        Ok(Svd {
            u: t.vt.transpose(),
            sigma: t.sigma,
            vt: t.u.transpose(),
        })
    }
}

fn jacobi_tall(a: &DenseMatrix) -> Result<Svd> {
    let (m, n) = (a.rows(), a.cols());
    let mut w = a.clone();
    let mut v = DenseMatrix::identity(n);
    let mut norms: Vec<f64> = (0..n).map(|j| dot(w.column(j), w.column(j))).collect();
    let eps = f64::EPSILON;
    // Columns below rounding level of the whole matrix carry no resolvable
    // singular value; rotating them only stalls convergence.
    let negligible = {
        let total: f64 = norms.iter().sum();
        eps * eps * total
    };
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = norms[p];
                let beta = norms[q];
                if alpha <= negligible || beta <= negligible {
                    continue;
                }
                let gamma = dot(w.column(p), w.column(q));
                if gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
                norms[p] = dot(w.column(p), w.column(p));
                norms[q] = dot(w.column(q), w.column(q));
            }
        }
        if !rotated {
            break;
        }
    }

    let sigma_raw: Vec<f64> = (0..n).map(|j| norm2(w.column(j))).collect();
    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps the deterministic column order for ties.
    order.sort_by(|&i, &j| sigma_raw[j].total_cmp(&sigma_raw[i]));

    let sigma: Vec<f64> = order.iter().map(|&j| sigma_raw[j]).collect();
    let mut u = DenseMatrix::zeros(m, n);
    let mut has_zero = false;
    for (k, &j) in order.iter().enumerate() {
        let s = sigma_raw[j];
        if s > 1e-300 && s * s > negligible {
            let inv = 1.0 / s;
            for (dst, src) in u.column_mut(k).iter_mut().zip(w.column(j)) {
                *dst = src * inv;
            }
        } else {
            has_zero = true;
        }
    }
    if has_zero {
        u = if sigma.first().map_or(true, |&s| s <= 1e-300) {
            DenseMatrix::identity(m).leading_columns(n)
        } else {
            qr_orthonormalize(&u)?.q
        };
    }
    let vt = v.permute_columns(&order).transpose();
    Ok(Svd { u, sigma, vt })
}

#[inline]
fn rotate(m: &mut DenseMatrix, p: usize, q: usize, c: f64, s: f64) {
    let (cp, cq) = m.column_pair_mut(p, q);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
#[derive(Clone, Debug)]
pub struct SpdFactorization {
    lower: DenseMatrix,
}

impl SpdFactorization {
    /// Factors `t + shift * I`.
    pub fn new(t: &DenseMatrix, shift: f64) -> Result<Self> {
        let n = t.rows();
        if t.cols() != n {
            return Err(Error::DimensionMismatch("spd factorization needs a square matrix"));
        }
        if !(shift >= 0.0) || !shift.is_finite() {
            return Err(Error::InvalidParameter("shift must be finite and nonnegative"));
        }
        let scale = t.max_abs().max(f64::MIN_POSITIVE);
        let mut asym = 0.0f64;
        for j in 0..n {
            for i in 0..j {
                asym = asym.max((t[(i, j)] - t[(j, i)]).abs());
            }
        }
        if asym > 1e-10 * scale {
            return Err(Error::NotSymmetric(asym));
        }
        let mut l = DenseMatrix::zeros(n, n);
        for j in 0..n {
            let mut d = t[(j, j)] + shift;
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > 0.0) {
                return Err(Error::NotPositiveDefinite { row: j, pivot: d });
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in (j + 1)..n {
                let mut s = t[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(Self { lower: l })
    }

    pub fn dimension(&self) -> usize {
        self.lower.rows()
    }

    pub fn lower(&self) -> &DenseMatrix {
        &self.lower
    }

    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dimension();
        assert_eq!(b.len(), n);
        let l = &self.lower;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= l[(i, k)] * y[k];
            }
            y[i] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= l[(k, i)] * y[k];
            }
            y[i] = s / l[(i, i)];
        }
        y
    }

    pub fn solve(&self, b: &DenseMatrix) -> DenseMatrix {
        let cols: Vec<Vec<f64>> = (0..b.cols()).map(|j| self.solve_vec(b.column(j))).collect();
        DenseMatrix::from_fn(b.rows(), b.cols(), |i, j| cols[j][i])
    }
}

/// Solves `(t + shift * I) X = b` for symmetric `t` by Cholesky.
pub fn spd_solve(t: &DenseMatrix, shift: f64, b: &DenseMatrix) -> Result<DenseMatrix> {
    if b.rows() != t.rows() {
        return Err(Error::DimensionMismatch("spd_solve right-hand side rows"));
    }
    Ok(SpdFactorization::new(t, shift)?.solve(b))
}

/// LU factorization with partial pivoting of a square matrix.
#[derive(Clone, Debug)]
pub struct LuFactorization {
    lu: DenseMatrix,
    perm: Vec<usize>,
    parity_negative: bool,
    singular: bool,
}

impl LuFactorization {
    pub fn new(a: &DenseMatrix) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(Error::DimensionMismatch("lu needs a square matrix"));
        }
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut parity_negative = false;
        let mut singular = false;
        for k in 0..n {
            let mut p = k;
            let mut best = lu[(k, k)].abs();
            for i in (k + 1)..n {
                let v = lu[(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 {
                singular = true;
                continue;
            }
            if p != k {
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = tmp;
                }
                perm.swap(k, p);
                parity_negative = !parity_negative;
            }
            let pivot = lu[(k, k)];
            for i in (k + 1)..n {
                let f = lu[(i, k)] / pivot;
                lu[(i, k)] = f;
                if f != 0.0 {
                    for j in (k + 1)..n {
                        let ukj = lu[(k, j)];
                        lu[(i, j)] -= f * ukj;
                    }
                }
            }
        }
        Ok(Self {
            lu,
            perm,
            parity_negative,
            singular,
        })
    }

    pub fn is_singular(&self) -> bool {
        self.singular
    }

    /// `(log|det|, sign)`; a singular matrix gives `(-inf, 0.0)`.
    pub fn log_abs_det(&self) -> (f64, f64) {
        if self.singular {
            return (f64::NEG_INFINITY, 0.0);
        }
        let mut log = 0.0;
        let mut sign = if self.parity_negative { -1.0 } else { 1.0 };
        for i in 0..self.lu.rows() {
            let d = self.lu[(i, i)];
            log += d.abs().ln();
            if d < 0.0 {
                sign = -sign;
            }
        }
        (log, sign)
    }

    pub fn solve_vec(&self, b: &[f64]) -> Result<Vec<f64>> {
        if self.singular {
            return Err(Error::NodeProximity);
        }
        let n = self.lu.rows();
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for k in 0..i {
                x[i] -= self.lu[(i, k)] * x[k];
            }
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                x[i] -= self.lu[(i, k)] * x[k];
            }
            x[i] /= self.lu[(i, i)];
        }
        Ok(x)
    }

    pub fn inverse(&self) -> Result<DenseMatrix> {
        let n = self.lu.rows();
        let mut e = vec![0.0; n];
        let mut cols = Vec::with_capacity(n);
        for j in 0..n {
            e.iter_mut().for_each(|x| *x = 0.0);
            e[j] = 1.0;
            cols.push(self.solve_vec(&e)?);
        }
        DenseMatrix::from_columns(n, &cols)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::test_support::{orthonormality_error, random_matrix};

    #[test]
    fn qr_identity_and_single_column() {
        let f = qr_orthonormalize(&DenseMatrix::identity(3)).unwrap();
        assert_eq!(f.q, DenseMatrix::identity(3));
        assert_eq!(f.r, DenseMatrix::identity(3));

        let a = DenseMatrix::from_column_major(2, 1, vec![3.0, 4.0]).unwrap();
        let f = qr_orthonormalize(&a).unwrap();
        assert!((f.q[(0, 0)] - 0.6).abs() < 1e-15);
        assert!((f.q[(1, 0)] - 0.8).abs() < 1e-15);
        assert!((f.r[(0, 0)] - 5.0).abs() < 1e-15);
    }

    #[test]
    fn qr_random_reconstructs() {
        let a = random_matrix(8, 3, 11);
        let f = qr_orthonormalize(&a).unwrap();
        assert!(orthonormality_error(&f.q) < 1e-12);
        assert!(f.q.matmul(&f.r).sub(&a).frobenius_norm() / a.frobenius_norm() < 1e-12);
        for j in 0..3 {
            assert!(f.r[(j, j)] >= 0.0);
            for i in (j + 1)..3 {
                assert_eq!(f.r[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn qr_errors() {
        assert_eq!(
            qr_orthonormalize(&DenseMatrix::zeros(3, 2)).unwrap_err(),
            Error::ZeroMatrix
        );
        assert!(matches!(
            qr_orthonormalize(&DenseMatrix::zeros(2, 3)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn qr_patches_dependent_columns() {
        // Second column duplicates the first, third is zero.
        let a = DenseMatrix::from_fn(4, 3, |i, j| if j < 2 { (i + 1) as f64 } else { 0.0 });
        let f = qr_orthonormalize(&a).unwrap();
        assert!(orthonormality_error(&f.q) < 1e-12);
        assert_eq!(f.r[(1, 1)], 0.0);
        assert_eq!(f.r[(2, 2)], 0.0);
        assert!(f.q.matmul(&f.r).sub(&a).frobenius_norm() < 1e-12 * a.frobenius_norm());
    }

    #[test]
    fn svd_diagonal_and_rank_one() {
        let s = exact_svd(&DenseMatrix::diagonal(&[3.0, 2.0, 1.0])).unwrap();
        assert_eq!(s.sigma, vec![3.0, 2.0, 1.0]);

        let mut a = DenseMatrix::zeros(4, 4);
        a[(0, 0)] = 2.0;
        let s = exact_svd(&a).unwrap();
        assert_eq!(s.sigma, vec![2.0, 0.0, 0.0, 0.0]);
        assert!(orthonormality_error(&s.u) < 1e-14);
        assert!(s.reconstruct().sub(&a).max_abs() < 1e-15);
    }

    #[test]
    fn svd_random_reconstructs_both_shapes() {
        for (m, n, seed) in [(6, 4, 1), (4, 6, 2), (9, 9, 3)] {
            let a = random_matrix(m, n, seed);
            let s = exact_svd(&a).unwrap();
            assert_eq!(s.sigma.len(), m.min(n));
            assert!(s.reconstruct().sub(&a).frobenius_norm() / a.frobenius_norm() < 1e-12);
            assert!(orthonormality_error(&s.u) < 1e-12);
            assert!(orthonormality_error(&s.vt.transpose()) < 1e-12);
            assert!(s.sigma.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn svd_zero_matrix_is_valid() {
        let s = exact_svd(&DenseMatrix::zeros(3, 2)).unwrap();
        assert_eq!(s.sigma, vec![0.0, 0.0]);
        assert!(orthonormality_error(&s.u) < 1e-15);
    }

    #[test]
    fn spd_solve_examples() {
        let b = DenseMatrix::from_column_major(3, 1, vec![1.0, -2.0, 3.0]).unwrap();
        let x = spd_solve(&DenseMatrix::identity(3), 0.0, &b).unwrap();
        assert_eq!(x, b);
        let x = spd_solve(&DenseMatrix::identity(3).scaled(2.0), 0.0, &b).unwrap();
        assert!(x.sub(&b.scaled(0.5)).max_abs() < 1e-15);

        let g = random_matrix(10, 10, 5);
        let t = g.matmul_t(&g).add(&DenseMatrix::identity(10));
        let rhs = random_matrix(10, 3, 6);
        let x = spd_solve(&t, 0.0, &rhs).unwrap();
        let res = t.matmul(&x).sub(&rhs).frobenius_norm() / rhs.frobenius_norm();
        assert!(res < 1e-10, "residual {res}");
    }

    #[test]
    fn spd_solve_errors() {
        let b = DenseMatrix::zeros(2, 1);
        let t = DenseMatrix::diagonal(&[1.0, -1.0]);
        assert!(matches!(
            spd_solve(&t, 0.0, &b),
            Err(Error::NotPositiveDefinite { row: 1, .. })
        ));
        // The shift can rescue an indefinite matrix.
        assert!(spd_solve(&t, 2.0, &b).is_ok());
        let mut ns = DenseMatrix::identity(2);
        ns[(0, 1)] = 0.5;
        assert!(matches!(spd_solve(&ns, 0.0, &b), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn lu_determinant_and_inverse() {
        let a = DenseMatrix::from_column_major(2, 2, vec![0.0, 2.0, 3.0, 1.0]).unwrap();
        // det = 0*1 - 3*2 = -6
        let lu = LuFactorization::new(&a).unwrap();
        let (log, sign) = lu.log_abs_det();
        assert!((log - 6f64.ln()).abs() < 1e-15);
        assert_eq!(sign, -1.0);
        let inv = lu.inverse().unwrap();
        assert!(a.matmul(&inv).sub(&DenseMatrix::identity(2)).max_abs() < 1e-15);

        let singular = DenseMatrix::from_column_major(2, 2, vec![1.0, 2.0, 2.0, 4.0]).unwrap();
        let lu = LuFactorization::new(&singular).unwrap();
        assert_eq!(lu.log_abs_det(), (f64::NEG_INFINITY, 0.0));
    }
}
