//! ACE backflow wavefunction: pooled one-body basis, backflow determinant and
//! a parameter-free Jastrow factor.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

// Float math for no_std; unused when a dependency links std.
#[cfg(not(test))]
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{DenseMatrix, LuFactorization};
use crate::system::{distance, ElectronConfiguration, MolecularSystem, Spin};
use crate::{Error, Result};

/// Step (Bohr) of the central-difference electron derivatives.
pub const FD_STEP: f64 = 1e-4;

/// A trial wavefunction with real parameters.
pub trait Wavefunction {
    fn n_params(&self) -> usize;
    fn params(&self) -> &[f64];
    fn set_params(&mut self, theta: &[f64]) -> Result<()>;

    /// `(log|psi|, sign)`. An exact node gives `(-inf, 0)`.
    fn log_psi(&self, x: &ElectronConfiguration) -> Result<(f64, f64)>;

    fn grad_theta_log_psi(&self, x: &ElectronConfiguration) -> Result<Vec<f64>>;

    /// Per-electron gradients of `log|psi|` and the summed Laplacian.
    fn grad_r_and_laplacian_log_psi(
        &self,
        x: &ElectronConfiguration,
    ) -> Result<(Vec<[f64; 3]>, f64)> {
        finite_difference_derivatives(|y| self.log_psi(y).map(|v| v.0), x, FD_STEP)
    }
}

/// Central differences of `f` in every electron coordinate.
pub fn finite_difference_derivatives<F>(
    f: F,
    x: &ElectronConfiguration,
    h: f64,
) -> Result<(Vec<[f64; 3]>, f64)>
where
    F: Fn(&ElectronConfiguration) -> Result<f64>,
{
    let check = |v: f64| if v.is_finite() { Ok(v) } else { Err(Error::NodeProximity) };
    let f0 = check(f(x)?)?;
    let mut y = x.clone();
    let mut grads = vec![[0.0; 3]; x.len()];
    let mut lap = 0.0;
    for i in 0..x.len() {
        for c in 0..3 {
            let orig = x.positions[i][c];
            y.positions[i][c] = orig + h;
            let fp = check(f(&y)?)?;
            y.positions[i][c] = orig - h;
            let fm = check(f(&y)?)?;
            y.positions[i][c] = orig;
            grads[i][c] = (fp - fm) / (2.0 * h);
            lap += (fp - 2.0 * f0 + fm) / (h * h);
        }
    }
    Ok((grads, lap))
}

/// Slater-type one-body function `r^n exp(-zeta r) S_lm` on one spin channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Orbital {
    pub center: usize,
    pub n: u32,
    pub l: u32,
    pub m: i32,
    pub zeta: f64,
    pub spin: Spin,
}

impl Orbital {
    pub fn degree(&self) -> u32 {
        self.n + self.l
    }

    fn canonical_cmp(&self, other: &Self) -> Ordering {
        (self.n, self.l, self.m, self.spin)
            .cmp(&(other.n, other.l, other.m, other.spin))
            .then_with(|| other.zeta.total_cmp(&self.zeta))
            .then_with(|| self.center.cmp(&other.center))
    }
}

/// Unnormalized real solid harmonic of degree `l <= 2`.
fn solid_harmonic(l: u32, m: i32, d: &[f64; 3]) -> f64 {
    let [x, y, z] = *d;
    match (l, m) {
        (0, _) => 1.0,
        (1, -1) => y,
        (1, 0) => z,
        (1, 1) => x,
        (2, -2) => x * y,
        (2, -1) => y * z,
        (2, 0) => 2.0 * z * z - x * x - y * y,
        (2, 1) => x * z,
        (2, 2) => x * x - y * y,
        _ => unreachable!("validated in OneBodyBasisSpec::new"),
    }
}

/// First and pure second derivatives of [`solid_harmonic`] per axis.
fn solid_harmonic_derivatives(l: u32, m: i32, d: &[f64; 3]) -> ([f64; 3], [f64; 3]) {
    let [x, y, z] = *d;
    match (l, m) {
        (0, _) => ([0.0; 3], [0.0; 3]),
        (1, -1) => ([0.0, 1.0, 0.0], [0.0; 3]),
        (1, 0) => ([0.0, 0.0, 1.0], [0.0; 3]),
        (1, 1) => ([1.0, 0.0, 0.0], [0.0; 3]),
        (2, -2) => ([y, x, 0.0], [0.0; 3]),
        (2, -1) => ([0.0, z, y], [0.0; 3]),
        (2, 0) => ([-2.0 * x, -2.0 * y, 4.0 * z], [-2.0, -2.0, 4.0]),
        (2, 1) => ([z, 0.0, x], [0.0; 3]),
        (2, 2) => ([2.0 * x, -2.0 * y, 0.0], [2.0, -2.0, 0.0]),
        _ => unreachable!("validated in OneBodyBasisSpec::new"),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OneBodyBasisSpec {
    centers: Vec<[f64; 3]>,
    orbitals: Vec<Orbital>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisOptions {
    pub n_max: u32,
    pub l_max: u32,
    /// Exponents shared by every center; `None` uses `{Z, Z/2, 1}` per nucleus.
    pub zetas: Option<Vec<f64>>,
}

impl Default for BasisOptions {
    fn default() -> Self {
        Self { n_max: 0, l_max: 1, zetas: None }
    }
}

impl OneBodyBasisSpec {
    /// Sorts `orbitals` into canonical order.
    pub fn new(centers: Vec<[f64; 3]>, mut orbitals: Vec<Orbital>) -> Result<Self> {
        if orbitals.is_empty() {
            return Err(Error::InvalidParameter("basis has no orbitals"));
        }
        for o in &orbitals {
            if o.center >= centers.len() {
                return Err(Error::InvalidParameter("orbital center out of range"));
            }
            if !(o.zeta.is_finite() && o.zeta > 0.0) {
                return Err(Error::InvalidParameter("orbital exponent must be positive"));
            }
            if o.l > 2 || o.m.unsigned_abs() > o.l {
                return Err(Error::InvalidParameter("angular momentum must satisfy l <= 2, |m| <= l"));
            }
        }
        orbitals.sort_by(Orbital::canonical_cmp);
        Ok(Self { centers, orbitals })
    }

    pub fn for_system(sys: &MolecularSystem, opts: &BasisOptions) -> Result<Self> {
        if opts.l_max > 2 {
            return Err(Error::InvalidParameter("l_max must be at most 2"));
        }
        let mut orbitals = Vec::new();
        for (c, nuc) in sys.nuclei().iter().enumerate() {
            let z = nuc.charge as f64;
            let mut zetas = opts.zetas.clone().unwrap_or_else(|| vec![z, z / 2.0, 1.0]);
            zetas.sort_by(|a, b| b.total_cmp(a));
            zetas.dedup();
            for &zeta in &zetas {
                for n in 0..=opts.n_max {
                    for l in 0..=opts.l_max {
                        for m in -(l as i32)..=l as i32 {
                            for spin in [Spin::Up, Spin::Down] {
                                orbitals.push(Orbital { center: c, n, l, m, zeta, spin });
                            }
                        }
                    }
                }
            }
        }
        let centers = sys.nuclei().iter().map(|n| n.position).collect();
        Self::new(centers, orbitals)
    }

    pub fn orbitals(&self) -> &[Orbital] {
        &self.orbitals
    }

    pub fn centers(&self) -> &[[f64; 3]] {
        &self.centers
    }

    pub fn len(&self) -> usize {
        self.orbitals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.orbitals.is_empty()
    }

    /// Values, gradients and pure second derivatives of every orbital.
    pub fn evaluate_with_derivatives(
        &self,
        r: &[f64; 3],
        spin: Spin,
        val: &mut [f64],
        d1: &mut [[f64; 3]],
        d2: &mut [[f64; 3]],
    ) {
        for (idx, o) in self.orbitals.iter().enumerate() {
            if o.spin != spin {
                val[idx] = 0.0;
                d1[idx] = [0.0; 3];
                d2[idx] = [0.0; 3];
                continue;
            }
            let c = &self.centers[o.center];
            let d = [r[0] - c[0], r[1] - c[1], r[2] - c[2]];
            let rho = distance(r, c);
            let n = o.n as f64;
            let radial = (-o.zeta * rho).exp() * rho.powi(o.n as i32);
            // R' = (n/rho - zeta) R, R'' = ((n/rho - zeta)^2 - n/rho^2) R
            let k = n / rho - o.zeta;
            let r1 = k * radial;
            let r2 = (k * k - n / (rho * rho)) * radial;
            let sh = solid_harmonic(o.l, o.m, &d);
            let (sd1, sd2) = solid_harmonic_derivatives(o.l, o.m, &d);
            val[idx] = radial * sh;
            for a in 0..3 {
                let u = d[a] / rho;
                let dr = r1 * u;
                let d2r = r2 * u * u + r1 * (1.0 - u * u) / rho;
                d1[idx][a] = dr * sh + radial * sd1[a];
                d2[idx][a] = d2r * sh + 2.0 * dr * sd1[a] + radial * sd2[a];
            }
        }
    }

    /// Values of every orbital at one electron, written into `out`.
    pub fn evaluate(&self, r: &[f64; 3], spin: Spin, out: &mut [f64]) {
        for (o, v) in self.orbitals.iter().zip(out.iter_mut()) {
            if o.spin != spin {
                *v = 0.0;
                continue;
            }
            let c = &self.centers[o.center];
            let d = [r[0] - c[0], r[1] - c[1], r[2] - c[2]];
            let dist = distance(r, c);
            let radial = (-o.zeta * dist).exp() * dist.powi(o.n as i32);
            *v = radial * solid_harmonic(o.l, o.m, &d);
        }
    }
}

/// Tuples `(nu_0; nu_1 <= ... <= nu_{b-1})` for `b = 1..=order`, ordered by
/// `b`, then lexicographically.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexSet {
    tuples: Vec<Vec<usize>>,
}

impl IndexSet {
    pub fn new(basis: &OneBodyBasisSpec, order: usize, degree_cap: Option<u32>) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidParameter("correlation order must be at least 1"));
        }
        let deg: Vec<u32> = basis.orbitals.iter().map(Orbital::degree).collect();
        let cap = degree_cap.unwrap_or(u32::MAX);
        let mut tuples = Vec::new();
        for b in 1..=order {
            for nu0 in 0..deg.len() {
                if deg[nu0] > cap {
                    continue;
                }
                let mut tail = Vec::with_capacity(b - 1);
                extend_tail(&deg, cap - deg[nu0], 0, b - 1, &mut tail, &mut |t| {
                    let mut tup = Vec::with_capacity(b);
                    tup.push(nu0);
                    tup.extend_from_slice(t);
                    tuples.push(tup);
                });
            }
        }
        if tuples.is_empty() {
            return Err(Error::InvalidParameter("degree cap excludes every tuple"));
        }
        Ok(Self { tuples })
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn tuples(&self) -> &[Vec<usize>] {
        &self.tuples
    }

    /// Position of the order-1 tuple `(nu)`, if retained.
    pub fn single(&self, nu: usize) -> Option<usize> {
        self.tuples.iter().position(|t| t.len() == 1 && t[0] == nu)
    }
}

fn extend_tail(
    deg: &[u32],
    budget: u32,
    start: usize,
    remaining: usize,
    tail: &mut Vec<usize>,
    emit: &mut dyn FnMut(&[usize]),
) {
    if remaining == 0 {
        emit(tail);
        return;
    }
    for nu in start..deg.len() {
        if deg[nu] > budget {
            continue;
        }
        tail.push(nu);
        extend_tail(deg, budget - deg[nu], nu, remaining - 1, tail, emit);
        tail.pop();
    }
}

/// `gamma = sum_{i<j} -c_ij / (1 + r_ij)` with `c = 1/2` for opposite and
/// `1/4` for equal spins.
pub fn jastrow(x: &ElectronConfiguration) -> f64 {
    let mut g = 0.0;
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let c = if x.spins[i] == x.spins[j] { 0.25 } else { 0.5 };
            g -= c / (1.0 + distance(&x.positions[i], &x.positions[j]));
        }
    }
    g
}

#[derive(Debug, Clone, PartialEq)]
pub struct AceOptions {
    pub basis: BasisOptions,
    pub correlation_order: usize,
    pub degree_cap: Option<u32>,
    pub jastrow: bool,
    pub init_noise: f64,
}

impl Default for AceOptions {
    fn default() -> Self {
        Self {
            basis: BasisOptions::default(),
            correlation_order: 2,
            degree_cap: Some(1),
            jastrow: true,
            init_noise: 1e-2,
        }
    }
}

/// How electron-coordinate derivatives of `log|psi|` are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DerivativeProvider {
    /// Central differences with step [`FD_STEP`].
    #[default]
    FiniteDifference,
    /// Closed form through the determinant trace identities.
    Analytic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AceWavefunction {
    basis: OneBodyBasisSpec,
    index: IndexSet,
    n_up: usize,
    n_down: usize,
    theta: Vec<f64>,
    pub jastrow_enabled: bool,
    pub provider: DerivativeProvider,
}

impl AceWavefunction {
    /// All coefficients start at zero.
    pub fn new(
        basis: OneBodyBasisSpec,
        correlation_order: usize,
        degree_cap: Option<u32>,
        n_up: usize,
        n_down: usize,
        jastrow_enabled: bool,
    ) -> Result<Self> {
        if n_up + n_down == 0 {
            return Err(Error::InvalidParameter("at least one electron is required"));
        }
        let index = IndexSet::new(&basis, correlation_order, degree_cap)?;
        let theta = vec![0.0; (n_up + n_down) * index.len()];
        Ok(Self {
            basis,
            index,
            n_up,
            n_down,
            theta,
            jastrow_enabled,
            provider: DerivativeProvider::default(),
        })
    }

    /// Builds the default basis for `sys` and applies [`Self::initialize`].
    pub fn for_system<R: Rng + ?Sized>(
        sys: &MolecularSystem,
        opts: &AceOptions,
        rng: &mut R,
    ) -> Result<Self> {
        let basis = OneBodyBasisSpec::for_system(sys, &opts.basis)?;
        let mut wf = Self::new(
            basis,
            opts.correlation_order,
            opts.degree_cap,
            sys.n_up(),
            sys.n_down(),
            opts.jastrow,
        )?;
        wf.initialize(opts.init_noise, rng)?;
        Ok(wf)
    }

    /// Orbital `k` gets coefficient 1 on the single-function tuple of the
    /// `k`-th orbital of its spin channel; every coefficient then receives
    /// Gaussian noise of scale `noise`.
    pub fn initialize<R: Rng + ?Sized>(&mut self, noise: f64, rng: &mut R) -> Result<()> {
        if !(noise >= 0.0 && noise.is_finite()) {
            return Err(Error::InvalidParameter("init noise must be nonnegative"));
        }
        let stride = self.index.len();
        self.theta.iter_mut().for_each(|t| *t = 0.0);
        for (spin, count, offset) in [(Spin::Up, self.n_up, 0), (Spin::Down, self.n_down, self.n_up)] {
            let channel: Vec<usize> = (0..self.basis.len())
                .filter(|&nu| self.basis.orbitals[nu].spin == spin)
                .filter_map(|nu| self.index.single(nu))
                .take(count)
                .collect();
            if channel.len() < count {
                return Err(Error::InvalidParameter("basis has too few orbitals for a spin channel"));
            }
            for (k, &col) in channel.iter().enumerate() {
                self.theta[(offset + k) * stride + col] = 1.0;
            }
        }
        if noise > 0.0 {
            for t in &mut self.theta {
                let z: f64 = rng.sample(StandardNormal);
                *t += noise * z;
            }
        }
        Ok(())
    }

    pub fn basis(&self) -> &OneBodyBasisSpec {
        &self.basis
    }

    pub fn index_set(&self) -> &IndexSet {
        &self.index
    }

    pub fn n_electrons(&self) -> usize {
        self.n_up + self.n_down
    }

    fn check(&self, x: &ElectronConfiguration) -> Result<()> {
        if x.len() != self.n_electrons() {
            return Err(Error::DimensionMismatch("electron count"));
        }
        Ok(())
    }

    fn one_body_values(&self, x: &ElectronConfiguration) -> Vec<Vec<f64>> {
        x.positions
            .iter()
            .zip(&x.spins)
            .map(|(r, &s)| {
                let mut v = vec![0.0; self.basis.len()];
                self.basis.evaluate(r, s, &mut v);
                v
            })
            .collect()
    }

    fn pooled_row(&self, phi: &[Vec<f64>], i: usize, out: &mut [f64]) {
        let k = self.basis.len();
        let mut pool = vec![0.0; k];
        for (j, pj) in phi.iter().enumerate() {
            if j != i {
                for (p, v) in pool.iter_mut().zip(pj) {
                    *p += v;
                }
            }
        }
        for (a, t) in out.iter_mut().zip(&self.index.tuples) {
            let mut v = phi[i][t[0]];
            for &nu in &t[1..] {
                v *= pool[nu];
            }
            *a = v;
        }
    }

    /// `A_nu(x_i; x_{!=i}) = phi_{nu_0}(x_i) prod_t sum_{j != i} phi_{nu_t}(x_j)`.
    pub fn pooled_basis(&self, x: &ElectronConfiguration, i: usize) -> Result<Vec<f64>> {
        self.check(x)?;
        if i >= x.len() {
            return Err(Error::InvalidParameter("highlighted electron out of range"));
        }
        let phi = self.one_body_values(x);
        let mut out = vec![0.0; self.index.len()];
        self.pooled_row(&phi, i, &mut out);
        Ok(out)
    }

    /// `N x |I|` matrix of pooled basis rows.
    fn design_matrix(&self, x: &ElectronConfiguration) -> DenseMatrix {
        let n = x.len();
        let phi = self.one_body_values(x);
        let mut a = DenseMatrix::zeros(n, self.index.len());
        let mut row = vec![0.0; self.index.len()];
        for i in 0..n {
            self.pooled_row(&phi, i, &mut row);
            for (nu, &v) in row.iter().enumerate() {
                a[(i, nu)] = v;
            }
        }
        a
    }

    /// Coefficients as an `|I| x N` matrix; column `k` belongs to orbital `k`.
    fn coefficient_matrix(&self) -> DenseMatrix {
        DenseMatrix::from_column_major(self.index.len(), self.n_electrons(), self.theta.clone())
            .expect("theta is finite and sized")
    }

    /// `M_ik = phi_k(x_i; x_{!=i})`.
    pub fn orbital_matrix(&self, x: &ElectronConfiguration) -> Result<DenseMatrix> {
        self.check(x)?;
        Ok(self.design_matrix(x).matmul(&self.coefficient_matrix()))
    }
}

impl AceWavefunction {
    /// Exact gradients and summed Laplacian of `log|psi|`.
    ///
    /// With `M = A Theta`, `d log|det M| = tr(M^-1 dM)` and
    /// `d^2 log|det M| = tr(M^-1 d^2M) - tr((M^-1 dM)^2)` per coordinate.
    pub fn analytic_derivatives(&self, x: &ElectronConfiguration) -> Result<(Vec<[f64; 3]>, f64)> {
        self.check(x)?;
        let n = x.len();
        let kb = self.basis.len();
        let mut phi = vec![vec![0.0; kb]; n];
        let mut d1 = vec![vec![[0.0; 3]; kb]; n];
        let mut d2 = vec![vec![[0.0; 3]; kb]; n];
        for j in 0..n {
            self.basis
                .evaluate_with_derivatives(&x.positions[j], x.spins[j], &mut phi[j], &mut d1[j], &mut d2[j]);
        }
        let mut pool = vec![vec![0.0; kb]; n];
        for (j, pj) in pool.iter_mut().enumerate() {
            for (l, pl) in phi.iter().enumerate() {
                if l != j {
                    for (p, v) in pj.iter_mut().zip(pl) {
                        *p += v;
                    }
                }
            }
        }
        let theta = self.coefficient_matrix();
        let a = self.design_matrix(x);
        let m = a.matmul(&theta);
        let inv = LuFactorization::new(&m)?.inverse()?;
        // w[(nu, j)] = sum_k Theta[nu, k] [M^-1]_{k j}
        let w = theta.matmul(&inv);

        let mut grads = vec![[0.0; 3]; n];
        let mut lap = 0.0;
        let mut da = DenseMatrix::zeros(n, self.index.len());
        for e in 0..n {
            for c in 0..3 {
                let mut first = 0.0;
                let mut second = 0.0;
                for j in 0..n {
                    for (nu, t) in self.index.tuples.iter().enumerate() {
                        let (mut p, mut dp, mut d2p) = if j == e {
                            (phi[j][t[0]], d1[e][t[0]][c], d2[e][t[0]][c])
                        } else {
                            (phi[j][t[0]], 0.0, 0.0)
                        };
                        if p == 0.0 && dp == 0.0 && d2p == 0.0 {
                            da[(j, nu)] = 0.0;
                            continue;
                        }
                        for &k in &t[1..] {
                            let (f, df, d2f) = if j == e {
                                (pool[j][k], 0.0, 0.0)
                            } else {
                                (pool[j][k], d1[e][k][c], d2[e][k][c])
                            };
                            d2p = d2p * f + 2.0 * dp * df + p * d2f;
                            dp = dp * f + p * df;
                            p *= f;
                        }
                        da[(j, nu)] = dp;
                        first += dp * w[(nu, j)];
                        second += d2p * w[(nu, j)];
                    }
                }
                let b = inv.matmul(&da.matmul(&theta));
                let mut tr_b2 = 0.0;
                for r in 0..n {
                    for q in 0..n {
                        tr_b2 += b[(r, q)] * b[(q, r)];
                    }
                }
                grads[e][c] = first;
                lap += second - tr_b2;
            }
        }

        if self.jastrow_enabled {
            for i in 0..n {
                for j in i + 1..n {
                    let c = if x.spins[i] == x.spins[j] { 0.25 } else { 0.5 };
                    let r = distance(&x.positions[i], &x.positions[j]);
                    if r < crate::system::COALESCENCE_GUARD {
                        return Err(Error::CoalescencePoint(i, j));
                    }
                    // u(r) = -c/(1+r): u' = c/(1+r)^2, u'' = -2c/(1+r)^3
                    let u1 = c / ((1.0 + r) * (1.0 + r));
                    let u2 = -2.0 * u1 / (1.0 + r);
                    for a in 0..3 {
                        let g = u1 * (x.positions[i][a] - x.positions[j][a]) / r;
                        grads[i][a] += g;
                        grads[j][a] -= g;
                    }
                    lap += 2.0 * (u2 + 2.0 * u1 / r);
                }
            }
        }
        Ok((grads, lap))
    }
}

impl Wavefunction for AceWavefunction {
    fn n_params(&self) -> usize {
        self.theta.len()
    }

    fn params(&self) -> &[f64] {
        &self.theta
    }

    fn set_params(&mut self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.theta.len() {
            return Err(Error::DimensionMismatch("parameter vector"));
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("parameter vector"));
        }
        self.theta.copy_from_slice(theta);
        Ok(())
    }

    fn log_psi(&self, x: &ElectronConfiguration) -> Result<(f64, f64)> {
        let m = self.orbital_matrix(x)?;
        let (log_det, sign) = LuFactorization::new(&m)?.log_abs_det();
        if sign == 0.0 {
            return Ok((f64::NEG_INFINITY, 0.0));
        }
        let gamma = if self.jastrow_enabled { jastrow(x) } else { 0.0 };
        Ok((log_det + gamma, sign))
    }

    fn grad_theta_log_psi(&self, x: &ElectronConfiguration) -> Result<Vec<f64>> {
        self.check(x)?;
        let a = self.design_matrix(x);
        let m = a.matmul(&self.coefficient_matrix());
        let inv = LuFactorization::new(&m)?.inverse()?;
        // d log|det M| / d theta[k, nu] = sum_i [M^-1]_{k i} A_nu(i)
        Ok(a.t_matmul(&inv.transpose()).into_vec())
    }

    fn grad_r_and_laplacian_log_psi(
        &self,
        x: &ElectronConfiguration,
    ) -> Result<(Vec<[f64; 3]>, f64)> {
        match self.provider {
            DerivativeProvider::FiniteDifference => {
                finite_difference_derivatives(|y| self.log_psi(y).map(|v| v.0), x, FD_STEP)
            }
            DerivativeProvider::Analytic => self.analytic_derivatives(x),
        }
    }
}
