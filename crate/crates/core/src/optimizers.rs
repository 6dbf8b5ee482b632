//! Parameter updates: SGD, full SR, MinSR, SPRING and the low-rank averaged
//! WSSR / RSSR methods.

use alloc::vec;
use alloc::vec::Vec;

// Float math for no_std; unused when a dependency links std.
#[cfg(not(test))]
#[allow(unused_imports)]
use num_traits::Float;

use crate::estimators::EstimatorBundle;
use crate::linalg::{axpy, dot, exact_svd, DenseMatrix, SpdFactorization};
use crate::svd::{
    exact_truncated_svd, randomized_svd, ssi_svd, subspace_drift, SsiOptions, SsiReport,
    TruncatedSvd,
};
use crate::{Error, Result};

/// `eta(k) = alpha / (1 + k / beta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearningRateSchedule {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for LearningRateSchedule {
    fn default() -> Self {
        Self { alpha: 0.015, beta: 1000.0 }
    }
}

impl LearningRateSchedule {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
            return Err(Error::InvalidParameter("learning-rate alpha and beta must be positive"));
        }
        Ok(Self { alpha, beta })
    }

    pub fn eta(&self, k: u64) -> f64 {
        self.alpha / (1.0 + k as f64 / self.beta)
    }
}

fn check_theta(theta: &[f64], bundle: &EstimatorBundle) -> Result<()> {
    if theta.len() != bundle.n_params() {
        return Err(Error::DimensionMismatch("parameter vector and estimators"));
    }
    Ok(())
}

/// `theta -= eta * g`.
pub fn sgd_update(theta: &mut [f64], bundle: &EstimatorBundle, eta: f64) -> Result<()> {
    check_theta(theta, bundle)?;
    axpy(-eta, &bundle.gradient, theta);
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SrRegularization {
    /// `S + eps I`.
    DiagonalShift(f64),
    /// `S + eps diag(S)`.
    DiagonalScale(f64),
    /// Pseudo-inverse keeping singular values `>= tol * sigma_max`.
    PseudoInverse(f64),
}

/// Preconditioned direction `S_reg^-1 g` (or `S^+ g`) on the full `M x M`
/// S-matrix. Meant for small parameter counts.
pub fn full_sr_direction(bundle: &EstimatorBundle, reg: SrRegularization) -> Result<Vec<f64>> {
    let s = bundle.s_matrix();
    let g = &bundle.gradient;
    match reg {
        SrRegularization::DiagonalShift(eps) => Ok(SpdFactorization::new(&s, eps)?.solve_vec(g)),
        SrRegularization::DiagonalScale(eps) => {
            let mut scaled = s;
            for i in 0..scaled.rows() {
                scaled[(i, i)] *= 1.0 + eps;
            }
            Ok(SpdFactorization::new(&scaled, 0.0)?.solve_vec(g))
        }
        SrRegularization::PseudoInverse(tol) => {
            let svd = exact_svd(&s)?;
            let smax = svd.sigma.first().copied().unwrap_or(0.0);
            let mut out = vec![0.0; g.len()];
            for (i, &si) in svd.sigma.iter().enumerate() {
                if si > 0.0 && si >= tol * smax {
                    let c = dot(svd.u.column(i), g) / si;
                    // S = U S V^T with V = rows of vt
                    let vi = svd.vt.row(i);
                    axpy(c, &vi, &mut out);
                }
            }
            Ok(out)
        }
    }
}

pub fn full_sr_update(
    theta: &mut [f64],
    bundle: &EstimatorBundle,
    eta: f64,
    reg: SrRegularization,
) -> Result<()> {
    check_theta(theta, bundle)?;
    let d = full_sr_direction(bundle, reg)?;
    axpy(-eta, &d, theta);
    Ok(())
}

/// `O y` where `y` solves `(T + eps I) y = rhs`; `eps = 0` uses the
/// pseudo-inverse of `T` through the SVD of `O`.
fn o_t_inverse(o: &DenseMatrix, rhs: &[f64], eps: f64) -> Result<Vec<f64>> {
    if eps > 0.0 {
        let y = SpdFactorization::new(&o.gram(), eps)?.solve_vec(rhs);
        return Ok(o.matvec(&y));
    }
    // O T^+ rhs = U S^-1 V^T rhs
    let svd = exact_svd(o)?;
    let s1 = svd.sigma.first().copied().unwrap_or(0.0);
    let tol = s1 * f64::EPSILON * o.rows().max(o.cols()) as f64;
    let mut out = vec![0.0; o.rows()];
    for (i, &si) in svd.sigma.iter().enumerate() {
        if si > tol && si > 0.0 {
            let c = dot(&svd.vt.row(i), rhs) / si;
            axpy(c, svd.u.column(i), &mut out);
        }
    }
    Ok(out)
}

/// `2 O (T + eps I)^-1 L`.
pub fn minsr_direction(bundle: &EstimatorBundle, tikhonov_eps: f64) -> Result<Vec<f64>> {
    if !(tikhonov_eps >= 0.0) {
        return Err(Error::InvalidParameter("tikhonov eps must be nonnegative"));
    }
    let mut d = o_t_inverse(&bundle.o, &bundle.l, tikhonov_eps)?;
    d.iter_mut().for_each(|v| *v *= 2.0);
    Ok(d)
}

pub fn minsr_update(
    theta: &mut [f64],
    bundle: &EstimatorBundle,
    eta: f64,
    tikhonov_eps: f64,
) -> Result<()> {
    check_theta(theta, bundle)?;
    let d = minsr_direction(bundle, tikhonov_eps)?;
    axpy(-eta, &d, theta);
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpringState {
    /// `theta^(k) - theta^(k-1)`.
    pub prev_update: Vec<f64>,
    pub mu: f64,
    pub tikhonov_eps: f64,
}

impl SpringState {
    pub fn new(n_params: usize, mu: f64, tikhonov_eps: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&mu) {
            return Err(Error::InvalidParameter("spring mu must lie in [0, 1)"));
        }
        if !(tikhonov_eps >= 0.0) {
            return Err(Error::InvalidParameter("tikhonov eps must be nonnegative"));
        }
        Ok(Self { prev_update: vec![0.0; n_params], mu, tikhonov_eps })
    }
}

/// MinSR with momentum. The new step is the previous one scaled by `mu`
/// plus the minimum-norm correction that makes `O^T dtheta` match the MinSR
/// step `-2 eta L`:
///
/// `L~ = L + mu / (2 eta) O^T dtheta_prev`,
/// `dtheta = -2 eta O T_reg^-1 L~ + mu dtheta_prev`,
///
/// with `T_reg = T + eps I + 1 1^T / N`.
pub fn spring_update(
    theta: &mut [f64],
    bundle: &EstimatorBundle,
    eta: f64,
    state: &mut SpringState,
) -> Result<()> {
    check_theta(theta, bundle)?;
    if state.prev_update.len() != theta.len() {
        return Err(Error::DimensionMismatch("spring momentum"));
    }
    let o = &bundle.o;
    let n = o.cols();
    let mut resid = bundle.l.clone();
    if state.mu != 0.0 {
        let proj = o.t_matvec(&state.prev_update);
        axpy(state.mu / (2.0 * eta), &proj, &mut resid);
    }
    let mut t = o.gram();
    let inv_n = 1.0 / n as f64;
    for v in t.as_mut_slice() {
        *v += inv_n;
    }
    let y = SpdFactorization::new(&t, state.tikhonov_eps)?.solve_vec(&resid);
    let mut step = o.matvec(&y);
    step.iter_mut().for_each(|v| *v *= -2.0 * eta);
    axpy(state.mu, &state.prev_update, &mut step);
    axpy(1.0, &step, theta);
    state.prev_update = step;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SvdBackend {
    /// Warm-started subspace iteration (exact SVD on the first step).
    Ssi,
    /// Fresh Gaussian sketch every step.
    Randomized,
    /// Exact SVD every step.
    Exact,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WssrConfig {
    /// Averaging weight of the history.
    pub delta: f64,
    pub sigma_floor: f64,
    /// Use `sigma_floor * s_1^2` instead of the absolute floor.
    pub relative_floor: bool,
    /// Relative cutoff on `s_i^2 / s_1^2` for the effective rank.
    pub r_reg: f64,
    pub initial_rank: usize,
    pub rank_growth: f64,
    pub ssi: SsiOptions,
    /// Extra sketch columns for the randomized backend.
    pub oversample: usize,
}

impl Default for WssrConfig {
    fn default() -> Self {
        Self {
            delta: 0.95,
            sigma_floor: 1e-3,
            relative_floor: false,
            r_reg: 1e-6,
            initial_rank: 400,
            rank_growth: 0.1,
            ssi: SsiOptions { max_iters: 3, ..SsiOptions::default() },
            oversample: 10,
        }
    }
}

impl WssrConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.delta) {
            return Err(Error::InvalidParameter("delta must lie in [0, 1)"));
        }
        if !(self.sigma_floor > 0.0 && self.sigma_floor.is_finite()) {
            return Err(Error::InvalidParameter("sigma floor must be positive"));
        }
        if !(self.r_reg > 0.0 && self.r_reg < 1.0) {
            return Err(Error::InvalidParameter("r_reg must lie in (0, 1)"));
        }
        if self.initial_rank == 0 {
            return Err(Error::InvalidParameter("initial rank must be positive"));
        }
        if !(self.rank_growth > 0.0 && self.rank_growth.is_finite()) {
            return Err(Error::InvalidParameter("rank growth must be positive"));
        }
        if self.ssi.max_iters == 0 {
            return Err(Error::InvalidParameter("SSI iterations must be positive"));
        }
        Ok(())
    }
}

/// Running low-rank history `(O_bar, L_bar)` and the previous factorization.
#[derive(Debug, Clone, PartialEq)]
pub struct WssrState {
    /// `U_r Sigma_r` of the last step, `M x r`.
    pub obar: DenseMatrix,
    /// `V_r L_hat`, length `r`.
    pub lbar: Vec<f64>,
    /// Previous rank-`r_max` factorization (warm start and drift reference).
    pub prev: Option<TruncatedSvd>,
    pub r_max: usize,
    pub step: u64,
}

impl WssrState {
    pub fn new(n_params: usize, cfg: &WssrConfig) -> Self {
        Self {
            obar: DenseMatrix::zeros(n_params, 0),
            lbar: Vec::new(),
            prev: None,
            r_max: cfg.initial_rank,
            step: 0,
        }
    }

    /// `S_bar = O_bar O_bar^T`.
    pub fn s_bar(&self) -> DenseMatrix {
        self.obar.matmul_t(&self.obar)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WssrDiagnostics {
    pub ssi: Option<SsiReport>,
    /// Effective rank kept in the history.
    pub rank: usize,
    /// Maximum rank used for this step's factorization.
    pub r_max: usize,
    /// `(sigma_drift, projector_drift)` against the previous step.
    pub drift: Option<(f64, f64)>,
    /// Averaged gradient `O_hat L_hat`.
    pub gbar: Vec<f64>,
}

/// One WSSR (or RSSR, with [`SvdBackend::Randomized`]) update. `seed` only
/// feeds the randomized backend.
pub fn wssr_step(
    theta: &mut [f64],
    bundle: &EstimatorBundle,
    eta: f64,
    state: &mut WssrState,
    cfg: &WssrConfig,
    backend: SvdBackend,
    seed: u64,
) -> Result<WssrDiagnostics> {
    check_theta(theta, bundle)?;
    cfg.validate()?;
    if state.obar.rows() != theta.len() || state.obar.cols() != state.lbar.len() {
        return Err(Error::DimensionMismatch("WSSR history"));
    }
    let m = theta.len();
    let (wh, wn) = (cfg.delta.sqrt(), (1.0 - cfg.delta).sqrt());
    let ohat = state.obar.scaled(wh).hcat(&bundle.o.scaled(wn));
    let lhat: Vec<f64> = state
        .lbar
        .iter()
        .map(|v| wh * v)
        .chain(bundle.l.iter().map(|v| wn * v))
        .collect();

    let r_max = state.r_max;
    let rank = r_max.min(m).min(ohat.cols());
    let mut report = None;
    let svd = match (backend, &state.prev) {
        (SvdBackend::Randomized, _) => {
            let p = cfg.oversample.min(m.min(ohat.cols()) - rank);
            randomized_svd(&ohat, rank, p, seed)?
        }
        (SvdBackend::Ssi, Some(prev)) => {
            let (svd, rep) = ssi_svd(&ohat, rank, Some(&prev.u), &cfg.ssi)?;
            report = Some(rep);
            svd
        }
        _ => exact_truncated_svd(&ohat, rank)?,
    };
    if svd.rank() == 0 {
        return Err(Error::RankCollapse);
    }

    let s1sq = svd.sigma[0] * svd.sigma[0];
    let r = svd.sigma.iter().take_while(|s| *s * *s >= cfg.r_reg * s1sq).count();
    if svd.rank() == r_max {
        let last = svd.sigma[r_max - 1];
        if last * last > cfg.r_reg * s1sq {
            state.r_max = ((1.0 + cfg.rank_growth) * r_max as f64).ceil() as usize;
        }
    }

    let gbar = ohat.matvec(&lhat);
    let kept = svd.truncated(r);
    let mut obar = kept.u.clone();
    for (j, s) in kept.sigma.iter().enumerate() {
        obar.column_mut(j).iter_mut().for_each(|x| *x *= s);
    }
    let lbar = kept.v.matvec(&lhat);

    // (U S^-2 U^T + floor^-1 (I - U U^T)) g_bar, applied by projections.
    let floor = if cfg.relative_floor { cfg.sigma_floor * s1sq } else { cfg.sigma_floor };
    let coeff = kept.u.t_matvec(&gbar);
    let mut perp = gbar.clone();
    let mut dir = vec![0.0; m];
    for (j, (&c, &s)) in coeff.iter().zip(&kept.sigma).enumerate() {
        axpy(-c, kept.u.column(j), &mut perp);
        axpy(c / (s * s), kept.u.column(j), &mut dir);
    }
    axpy(1.0 / floor, &perp, &mut dir);
    axpy(-eta, &dir, theta);

    let drift = state.prev.as_ref().map(|prev| {
        let common = r.min(prev.rank());
        subspace_drift(&prev.truncated(common), &svd.truncated(common))
    });
    state.obar = obar;
    state.lbar = lbar;
    state.prev = Some(svd);
    state.step += 1;
    Ok(WssrDiagnostics { ssi: report, rank: r, r_max, drift, gbar })
}

/// [`wssr_step`] with a fresh randomized sketch.
pub fn rssr_step(
    theta: &mut [f64],
    bundle: &EstimatorBundle,
    eta: f64,
    state: &mut WssrState,
    cfg: &WssrConfig,
    seed: u64,
) -> Result<WssrDiagnostics> {
    wssr_step(theta, bundle, eta, state, cfg, SvdBackend::Randomized, seed)
}

/// Optimizer names accepted by [`OptimizerKind::from_name`].
pub const OPTIMIZER_NAMES: &[&str] = &["sgd", "sr", "minsr", "spring", "wssr", "rssr"];

#[derive(Debug, Clone, PartialEq)]
pub enum OptimizerKind {
    Sgd,
    Sr(SrRegularization),
    MinSr { tikhonov_eps: f64 },
    Spring { mu: f64, tikhonov_eps: f64 },
    Wssr(WssrConfig),
    Rssr(WssrConfig),
}

impl OptimizerKind {
    /// Defaults for a named optimizer.
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sgd" => Self::Sgd,
            "sr" => Self::Sr(SrRegularization::DiagonalShift(1e-3)),
            "minsr" => Self::MinSr { tikhonov_eps: 1e-3 },
            "spring" => Self::Spring { mu: 0.99, tikhonov_eps: 1e-3 },
            "wssr" => Self::Wssr(WssrConfig::default()),
            "rssr" => Self::Rssr(WssrConfig::default()),
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Sgd => "sgd",
            Self::Sr(_) => "sr",
            Self::MinSr { .. } => "minsr",
            Self::Spring { .. } => "spring",
            Self::Wssr(_) => "wssr",
            Self::Rssr(_) => "rssr",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OptimizerState {
    Stateless,
    Spring(SpringState),
    Wssr(WssrState),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepDiagnostics {
    pub ssi: Option<SsiReport>,
    pub rank: Option<usize>,
    pub r_max: Option<usize>,
    pub drift: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub schedule: LearningRateSchedule,
    pub state: OptimizerState,
    /// Seed of the randomized sketches; step `k` uses `seed + k`.
    pub seed: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, schedule: LearningRateSchedule, n_params: usize, seed: u64) -> Result<Self> {
        let state = match &kind {
            OptimizerKind::Spring { mu, tikhonov_eps } => {
                OptimizerState::Spring(SpringState::new(n_params, *mu, *tikhonov_eps)?)
            }
            OptimizerKind::Wssr(cfg) | OptimizerKind::Rssr(cfg) => {
                cfg.validate()?;
                OptimizerState::Wssr(WssrState::new(n_params, cfg))
            }
            _ => OptimizerState::Stateless,
        };
        Ok(Self { kind, schedule, state, seed })
    }

    /// Applies update number `k` (zero-based) to `theta`.
    pub fn step(&mut self, theta: &mut [f64], bundle: &EstimatorBundle, k: u64) -> Result<StepDiagnostics> {
        let eta = self.schedule.eta(k);
        let mut diag = StepDiagnostics::default();
        match (&self.kind, &mut self.state) {
            (OptimizerKind::Sgd, _) => sgd_update(theta, bundle, eta)?,
            (OptimizerKind::Sr(reg), _) => full_sr_update(theta, bundle, eta, *reg)?,
            (OptimizerKind::MinSr { tikhonov_eps }, _) => minsr_update(theta, bundle, eta, *tikhonov_eps)?,
            (OptimizerKind::Spring { .. }, OptimizerState::Spring(st)) => spring_update(theta, bundle, eta, st)?,
            (OptimizerKind::Wssr(cfg), OptimizerState::Wssr(st)) => {
                let d = wssr_step(theta, bundle, eta, st, cfg, SvdBackend::Ssi, 0)?;
                diag = StepDiagnostics { ssi: d.ssi, rank: Some(d.rank), r_max: Some(d.r_max), drift: d.drift };
            }
            (OptimizerKind::Rssr(cfg), OptimizerState::Wssr(st)) => {
                let d = rssr_step(theta, bundle, eta, st, cfg, self.seed.wrapping_add(k))?;
                diag = StepDiagnostics { ssi: None, rank: Some(d.rank), r_max: Some(d.r_max), drift: d.drift };
            }
            _ => return Err(Error::InvalidParameter("optimizer state does not match its kind")),
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("updated parameters"));
        }
        Ok(diag)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::test_support::random_bundle;
    use crate::linalg::norm2;
    use crate::linalg::test_support::random_matrix;

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
        max_diff(a, b) / b.iter().map(|x| x.abs()).fold(0.0, f64::max)
    }

    /// Bundle with prescribed O and L; the gradient is `2 O L`.
    fn bundle_from(o: DenseMatrix, l: Vec<f64>) -> EstimatorBundle {
        let mut gradient = o.matvec(&l);
        gradient.iter_mut().for_each(|g| *g *= 2.0);
        EstimatorBundle { loss: 0.0, raw_energy: 0.0, energy_variance: 0.0, o, l, gradient }
    }

    fn exact_cfg(delta: f64, rank: usize) -> WssrConfig {
        WssrConfig { delta, initial_rank: rank, ..WssrConfig::default() }
    }

    #[test]
    fn schedule_matches_reference_values() {
        let s = LearningRateSchedule::default();
        assert_eq!(s.eta(0), 0.015);
        assert!((s.eta(1000) - 0.0075).abs() < 1e-18);
        assert!((s.eta(3000) - 0.00375).abs() < 1e-18);
        for k in [1u64, 17, 12345] {
            assert_eq!(s.eta(k), 0.015 / (1.0 + k as f64 / 1000.0));
            assert!(s.eta(k) < s.eta(k - 1));
        }
        assert!(LearningRateSchedule::new(0.0, 1.0).is_err());
        assert!(LearningRateSchedule::new(1.0, -1.0).is_err());
    }

    #[test]
    fn sgd_arithmetic() {
        let mut b = bundle_from(DenseMatrix::zeros(2, 2), vec![0.0, 0.0]);
        b.gradient = vec![2.0, -2.0];
        let mut theta = vec![1.0, 1.0];
        sgd_update(&mut theta, &b, 0.1).unwrap();
        assert!(max_diff(&theta, &[0.8, 1.2]) < 1e-15);
        let zero = bundle_from(DenseMatrix::zeros(2, 2), vec![0.0, 0.0]);
        sgd_update(&mut theta, &zero, 0.1).unwrap();
        assert!(max_diff(&theta, &[0.8, 1.2]) < 1e-15);
        assert!(sgd_update(&mut [0.0; 3], &zero, 0.1).is_err());
    }

    #[test]
    fn sr_with_identity_s_is_sgd() {
        let h = 1.0 / 2.0f64.sqrt();
        let o = DenseMatrix::from_columns(2, &[vec![h, 0.0], vec![-h, 0.0], vec![0.0, h], vec![0.0, -h]]).unwrap();
        let b = bundle_from(o, vec![0.3, -0.3, 1.1, -1.1]);
        assert!(b.s_matrix().sub(&DenseMatrix::identity(2)).max_abs() < 1e-15);
        for reg in [
            SrRegularization::DiagonalShift(0.0),
            SrRegularization::DiagonalScale(0.0),
            SrRegularization::PseudoInverse(1e-12),
        ] {
            assert!(max_diff(&full_sr_direction(&b, reg).unwrap(), &b.gradient) < 1e-14);
        }
    }

    #[test]
    fn pseudo_inverse_with_unit_tolerance_keeps_one_mode() {
        let b = random_bundle(5, 12, 4);
        let d = full_sr_direction(&b, SrRegularization::PseudoInverse(1.0)).unwrap();
        let svd = exact_svd(&b.o).unwrap();
        let u1 = svd.u.column(0);
        let lam = svd.sigma[0] * svd.sigma[0];
        let c = dot(u1, &b.gradient) / lam;
        let expect: Vec<f64> = u1.iter().map(|u| c * u).collect();
        assert!(rel_diff(&d, &expect) < 1e-10);
    }

    #[test]
    fn pseudo_inverse_matches_scripted_cutoff() {
        // Give O a spread spectrum so the cutoff actually removes modes.
        let mut raw = random_matrix(6, 12, 8);
        for i in 0..6 {
            let w = 10f64.powi(-(i as i32));
            for j in 0..12 {
                raw[(i, j)] *= w;
            }
        }
        let mean: Vec<f64> = (0..6).map(|i| raw.row(i).iter().sum::<f64>() / 12.0).collect();
        let o = DenseMatrix::from_fn(6, 12, |i, j| (raw[(i, j)] - mean[i]) / 12f64.sqrt());
        let l = random_matrix(12, 1, 9).into_vec();
        let b = bundle_from(o.clone(), l);
        let tol = 1e-5;
        let d = full_sr_direction(&b, SrRegularization::PseudoInverse(tol)).unwrap();
        // Oracle from the singular values of O: S eigenvalues are s_i^2.
        let svd = exact_svd(&o).unwrap();
        let lam1 = svd.sigma[0].powi(2);
        let mut expect = vec![0.0; 6];
        let mut kept = 0;
        for (i, s) in svd.sigma.iter().enumerate() {
            let lam = s * s;
            if lam >= tol * lam1 {
                kept += 1;
                let u = svd.u.column(i);
                let c = dot(u, &b.gradient) / lam;
                axpy(c, u, &mut expect);
            }
        }
        assert!(kept > 1 && kept < 6, "cutoff should be active, kept {kept}");
        assert!(rel_diff(&d, &expect) < 1e-10);
    }

    #[test]
    fn diagonal_variants_solve_their_systems() {
        let b = random_bundle(4, 9, 12);
        let s = b.s_matrix();
        let eps = 0.05;
        let shift = full_sr_direction(&b, SrRegularization::DiagonalShift(eps)).unwrap();
        let mut lhs = s.matvec(&shift);
        axpy(eps, &shift, &mut lhs);
        assert!(max_diff(&lhs, &b.gradient) < 1e-12);
        let scale = full_sr_direction(&b, SrRegularization::DiagonalScale(eps)).unwrap();
        let mut lhs = s.matvec(&scale);
        for i in 0..4 {
            lhs[i] += eps * s[(i, i)] * scale[i];
        }
        assert!(max_diff(&lhs, &b.gradient) < 1e-12);
    }

    #[test]
    fn minsr_without_shift_equals_full_sr() {
        let b = random_bundle(5, 10, 31);
        let mr = minsr_direction(&b, 0.0).unwrap();
        let sr = full_sr_direction(&b, SrRegularization::DiagonalShift(0.0)).unwrap();
        assert!(rel_diff(&mr, &sr) < 1e-10);
        assert!(minsr_direction(&b, -1.0).is_err());
    }

    #[test]
    fn minsr_with_zero_l_does_not_move() {
        let mut b = random_bundle(5, 10, 2);
        b.l = vec![0.0; 10];
        let mut theta = vec![0.5; 5];
        minsr_update(&mut theta, &b, 0.1, 1e-3).unwrap();
        assert_eq!(theta, vec![0.5; 5]);
    }

    #[test]
    fn spring_without_momentum_is_minsr() {
        for seed in 0..5 {
            let b = random_bundle(8, 20, 100 + seed);
            let mut t_minsr = vec![0.1; 8];
            minsr_update(&mut t_minsr, &b, 0.02, 1e-3).unwrap();
            let mut t_spring = vec![0.1; 8];
            let mut st = SpringState::new(8, 0.0, 1e-3).unwrap();
            spring_update(&mut t_spring, &b, 0.02, &mut st).unwrap();
            assert!(max_diff(&t_spring, &t_minsr) < 1e-12);
            // A second step keeps the reduction.
            let b2 = random_bundle(8, 20, 200 + seed);
            minsr_update(&mut t_minsr, &b2, 0.02, 1e-3).unwrap();
            spring_update(&mut t_spring, &b2, 0.02, &mut st).unwrap();
            assert!(max_diff(&t_spring, &t_minsr) < 1e-12);
        }
    }

    #[test]
    fn spring_first_step_ignores_momentum() {
        let b = random_bundle(6, 15, 7);
        let mut a = vec![0.0; 6];
        let mut c = vec![0.0; 6];
        spring_update(&mut a, &b, 0.01, &mut SpringState::new(6, 0.0, 1e-3).unwrap()).unwrap();
        spring_update(&mut c, &b, 0.01, &mut SpringState::new(6, 0.9, 1e-3).unwrap()).unwrap();
        assert!(max_diff(&a, &c) < 1e-14);
    }

    #[test]
    fn spring_second_step_matches_direct_formula() {
        let (eta, mu, eps) = (0.01, 0.7, 1e-3);
        let b1 = random_bundle(6, 15, 41);
        let b2 = random_bundle(6, 15, 42);
        let mut theta = vec![0.0; 6];
        let mut st = SpringState::new(6, mu, eps).unwrap();
        spring_update(&mut theta, &b1, eta, &mut st).unwrap();
        let prev = st.prev_update.clone();
        let before = theta.clone();
        spring_update(&mut theta, &b2, eta, &mut st).unwrap();

        // Independent path: explicit T_reg and an LU solve.
        let n = 15;
        let t = DenseMatrix::from_fn(n, n, |i, j| {
            dot(b2.o.column(i), b2.o.column(j)) + 1.0 / n as f64 + if i == j { eps } else { 0.0 }
        });
        let ot_prev = b2.o.t_matvec(&prev);
        let rhs: Vec<f64> = (0..n).map(|i| b2.l[i] + mu / (2.0 * eta) * ot_prev[i]).collect();
        let y = crate::linalg::LuFactorization::new(&t).unwrap().solve_vec(&rhs).unwrap();
        let oy = b2.o.matvec(&y);
        let expect: Vec<f64> = (0..6).map(|i| before[i] - 2.0 * eta * oy[i] + mu * prev[i]).collect();
        assert!(max_diff(&theta, &expect) < 1e-12);
        let applied: Vec<f64> = theta.iter().zip(&before).map(|(a, b)| a - b).collect();
        assert_eq!(applied, st.prev_update);
    }

    #[test]
    fn spring_rejects_bad_mu() {
        assert!(SpringState::new(3, 1.0, 1e-3).is_err());
        assert!(SpringState::new(3, -0.1, 1e-3).is_err());
        assert!(SpringState::new(3, 0.5, -1.0).is_err());
    }

    #[test]
    fn wssr_first_step_is_scaled_batch() {
        let delta = 0.95;
        let b = random_bundle(6, 10, 5);
        let cfg = exact_cfg(delta, 50);
        let mut st = WssrState::new(6, &cfg);
        assert_eq!((st.obar.cols(), st.lbar.len()), (0, 0));
        let mut theta = vec![0.0; 6];
        let d = wssr_step(&mut theta, &b, 0.01, &mut st, &cfg, SvdBackend::Exact, 0).unwrap();
        let expect_s = b.s_matrix().scaled(1.0 - delta);
        assert!(st.s_bar().sub(&expect_s).max_abs() < 1e-10);
        let expect_g: Vec<f64> = b.o.matvec(&b.l).iter().map(|v| (1.0 - delta) * v).collect();
        assert!(max_diff(&d.gbar, &expect_g) < 1e-10);
        assert!(d.drift.is_none() && d.ssi.is_none());
        assert_eq!(d.rank, 6);
    }

    #[test]
    fn wssr_history_follows_delta_recursion() {
        let delta = 0.8;
        let cfg = exact_cfg(delta, 50);
        let mut st = WssrState::new(6, &cfg);
        let mut theta = vec![0.0; 6];
        let mut s_ref = DenseMatrix::zeros(6, 6);
        let mut g_ref = vec![0.0; 6];
        for k in 0..3 {
            let b = random_bundle(6, 10, 60 + k);
            let d = wssr_step(&mut theta, &b, 0.01, &mut st, &cfg, SvdBackend::Exact, 0).unwrap();
            s_ref = s_ref.scaled(delta).add(&b.s_matrix().scaled(1.0 - delta));
            let ol = b.o.matvec(&b.l);
            g_ref = g_ref.iter().zip(&ol).map(|(g, v)| delta * g + (1.0 - delta) * v).collect();
            assert!(st.s_bar().sub(&s_ref).max_abs() < 1e-10, "step {k}");
            assert!(max_diff(&d.gbar, &g_ref) < 1e-10, "step {k}");
        }
    }

    #[test]
    fn wssr_full_rank_matches_pseudo_inverse() {
        let cfg = exact_cfg(0.5, 50);
        let mut st = WssrState::new(5, &cfg);
        let mut theta = vec![0.0; 5];
        let eta = 0.03;
        let b = random_bundle(5, 12, 77);
        wssr_step(&mut theta, &b, eta, &mut st, &cfg, SvdBackend::Exact, 0).unwrap();
        let b = random_bundle(5, 12, 78);
        let before = theta.clone();
        let d = wssr_step(&mut theta, &b, eta, &mut st, &cfg, SvdBackend::Exact, 0).unwrap();
        assert_eq!(d.rank, 5);
        // Oracle: full SR with S = S_bar and gradient g_bar.
        let mut oracle = bundle_from(st.obar.clone(), vec![0.0; st.obar.cols()]);
        oracle.gradient = d.gbar.clone();
        let dir = full_sr_direction(&oracle, SrRegularization::PseudoInverse(1e-14)).unwrap();
        let expect: Vec<f64> = before.iter().zip(&dir).map(|(t, v)| t - eta * v).collect();
        let step: Vec<f64> = theta.iter().zip(&before).map(|(a, b)| a - b).collect();
        let expect_step: Vec<f64> = expect.iter().zip(&before).map(|(a, b)| a - b).collect();
        assert!(rel_diff(&step, &expect_step) < 1e-10);
    }

    #[test]
    fn wssr_complement_branch_uses_floor() {
        // History dominated by e1; the new batch only moves along e2.
        let cfg = WssrConfig { delta: 0.5, initial_rank: 1, sigma_floor: 1e-2, ..WssrConfig::default() };
        let mut st = WssrState::new(3, &cfg);
        st.obar = DenseMatrix::from_columns(3, &[vec![10.0, 0.0, 0.0]]).unwrap();
        st.lbar = vec![0.0];
        let a = 0.3;
        let o = DenseMatrix::from_columns(3, &[vec![0.0, a, 0.0], vec![0.0, -a, 0.0]]).unwrap();
        let b = bundle_from(o, vec![0.2, -0.2]);
        let mut theta = vec![1.0, 1.0, 1.0];
        let eta = 0.1;
        let d = wssr_step(&mut theta, &b, eta, &mut st, &cfg, SvdBackend::Exact, 0).unwrap();
        let gbar = 0.5 * 2.0 * a * 0.2;
        assert!(max_diff(&d.gbar, &[0.0, gbar, 0.0]) < 1e-15);
        let expect = [1.0, 1.0 - eta * gbar / 1e-2, 1.0];
        assert!(max_diff(&theta, &expect) < 1e-12);
    }

    #[test]
    fn rank_growth_and_monotonicity() {
        let cfg = exact_cfg(0.9, 2);
        let mut st = WssrState::new(8, &cfg);
        let mut theta = vec![0.0; 8];
        let mut last = st.r_max;
        for k in 0..6 {
            let b = random_bundle(8, 12, 300 + k);
            let d = wssr_step(&mut theta, &b, 0.01, &mut st, &cfg, SvdBackend::Exact, 0).unwrap();
            assert!(d.rank >= 1 && d.rank <= d.r_max);
            assert!(st.r_max >= last);
            last = st.r_max;
        }
        // 2 -> 3 -> 4 -> 5 -> 6 -> 7 -> 8, then capped by the parameter count.
        assert_eq!(st.r_max, 8);
        let b = random_bundle(8, 12, 400);
        wssr_step(&mut theta, &b, 0.01, &mut st, &cfg, SvdBackend::Exact, 0).unwrap();
        assert_eq!(st.r_max, 9);
        let b = random_bundle(8, 12, 401);
        wssr_step(&mut theta, &b, 0.01, &mut st, &cfg, SvdBackend::Exact, 0).unwrap();
        assert_eq!(st.r_max, 9, "no growth once the factorization is not binding");
    }

    #[test]
    fn wssr_direction_is_descent() {
        for backend in [SvdBackend::Exact, SvdBackend::Ssi] {
            let cfg = exact_cfg(0.9, 4);
            let mut st = WssrState::new(12, &cfg);
            let mut theta = vec![0.0; 12];
            let eta = 0.02;
            for k in 0..5 {
                let b = random_bundle(12, 9, 500 + k);
                let before = theta.clone();
                let d = wssr_step(&mut theta, &b, eta, &mut st, &cfg, backend, 0).unwrap();
                let dir: Vec<f64> = before.iter().zip(&theta).map(|(a, b)| (a - b) / eta).collect();
                let gg = dot(&d.gbar, &d.gbar);
                let dg = dot(&dir, &d.gbar);
                let s1 = st.prev.as_ref().unwrap().sigma[0];
                let lo = (1.0 / cfg.sigma_floor).min(1.0 / (s1 * s1));
                assert!(dg >= lo * gg * (1.0 - 1e-10), "step {k}: {dg} vs {}", lo * gg);
            }
        }
    }

    #[test]
    fn ssi_backend_reports_iterations_after_first_step() {
        let cfg = exact_cfg(0.9, 3);
        let mut st = WssrState::new(10, &cfg);
        let mut theta = vec![0.0; 10];
        let d = wssr_step(&mut theta, &random_bundle(10, 8, 1), 0.01, &mut st, &cfg, SvdBackend::Ssi, 0).unwrap();
        assert!(d.ssi.is_none());
        let d = wssr_step(&mut theta, &random_bundle(10, 8, 2), 0.01, &mut st, &cfg, SvdBackend::Ssi, 0).unwrap();
        let rep = d.ssi.unwrap();
        assert!(rep.warm_started && rep.iterations_used >= 1 && rep.iterations_used <= 3);
        let (sd, pd) = d.drift.unwrap();
        assert!(sd >= 0.0 && (0.0..=1.0 + 1e-12).contains(&pd));
    }

    #[test]
    fn rssr_exact_on_low_rank_input() {
        // 8 centered samples give rank 7 in 20 dimensions.
        let cfg = exact_cfg(0.9, 10);
        let b = random_bundle(20, 8, 13);
        let mut t_exact = vec![0.0; 20];
        let mut t_rand = vec![0.0; 20];
        let mut s_exact = WssrState::new(20, &cfg);
        let mut s_rand = WssrState::new(20, &cfg);
        wssr_step(&mut t_exact, &b, 0.01, &mut s_exact, &cfg, SvdBackend::Exact, 0).unwrap();
        rssr_step(&mut t_rand, &b, 0.01, &mut s_rand, &cfg, 99).unwrap();
        assert!(max_diff(&t_exact, &t_rand) < 1e-8);
    }

    #[test]
    fn rssr_is_seed_deterministic() {
        let cfg = exact_cfg(0.9, 5);
        let run = |seed: u64| {
            let mut opt = Optimizer::new(OptimizerKind::Rssr(cfg.clone()), LearningRateSchedule::default(), 15, seed).unwrap();
            let mut theta = vec![0.0; 15];
            for k in 0..4 {
                opt.step(&mut theta, &random_bundle(15, 20, 900 + k), k).unwrap();
            }
            theta
        };
        assert_eq!(run(3), run(3));
        assert_ne!(run(3), run(4));
    }

    #[test]
    fn rssr_error_tracks_spectral_tail() {
        let (m, r, eta) = (30, 10, 0.01);
        let cfg = exact_cfg(0.9, r);
        let b = random_bundle(m, 40, 17);
        let ohat = b.o.scaled((1.0 - cfg.delta).sqrt());
        let tail = exact_svd(&ohat).unwrap().sigma[r];
        let mut t_exact = vec![0.0; m];
        wssr_step(&mut t_exact, &b, eta, &mut WssrState::new(m, &cfg), &cfg, SvdBackend::Exact, 0).unwrap();
        for seed in 0..10 {
            let mut t_rand = vec![0.0; m];
            rssr_step(&mut t_rand, &b, eta, &mut WssrState::new(m, &cfg), &cfg, seed).unwrap();
            let err = norm2(&t_exact.iter().zip(&t_rand).map(|(a, b)| a - b).collect::<Vec<_>>());
            assert!(err <= 10.0 * tail * eta / cfg.sigma_floor, "seed {seed}: {err}");
        }
    }

    #[test]
    fn config_validation() {
        assert!(WssrConfig::default().validate().is_ok());
        for bad in [
            WssrConfig { delta: 1.0, ..WssrConfig::default() },
            WssrConfig { sigma_floor: 0.0, ..WssrConfig::default() },
            WssrConfig { r_reg: 1.0, ..WssrConfig::default() },
            WssrConfig { initial_rank: 0, ..WssrConfig::default() },
            WssrConfig { rank_growth: 0.0, ..WssrConfig::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn named_defaults() {
        for name in OPTIMIZER_NAMES {
            assert_eq!(OptimizerKind::from_name(name).unwrap().name(), *name);
        }
        assert!(OptimizerKind::from_name("adam").is_none());
        assert_eq!(OptimizerKind::from_name("spring"), Some(OptimizerKind::Spring { mu: 0.99, tikhonov_eps: 1e-3 }));
        assert_eq!(OptimizerKind::from_name("minsr"), Some(OptimizerKind::MinSr { tikhonov_eps: 1e-3 }));
        let w = WssrConfig::default();
        assert_eq!(w.ssi.max_iters, 3);
        assert_eq!((w.delta, w.sigma_floor, w.r_reg, w.initial_rank, w.rank_growth), (0.95, 1e-3, 1e-6, 400, 0.1));
    }

    #[test]
    fn every_optimizer_takes_a_step() {
        for name in OPTIMIZER_NAMES {
            let kind = OptimizerKind::from_name(name).unwrap();
            let mut opt = Optimizer::new(kind, LearningRateSchedule::default(), 6, 1).unwrap();
            let mut theta = vec![0.0; 6];
            for k in 0..3 {
                let d = opt.step(&mut theta, &random_bundle(6, 10, 40 + k), k).unwrap();
                let low_rank = matches!(*name, "wssr" | "rssr");
                assert_eq!(d.rank.is_some(), low_rank, "{name}");
                assert_eq!(d.drift.is_some(), low_rank && k > 0, "{name}");
            }
            assert!(theta.iter().any(|t| *t != 0.0), "{name}");
        }
        let mut opt = Optimizer::new(OptimizerKind::Sgd, LearningRateSchedule::default(), 6, 1).unwrap();
        opt.kind = OptimizerKind::Spring { mu: 0.5, tikhonov_eps: 1e-3 };
        assert!(opt.step(&mut [0.0; 6], &random_bundle(6, 10, 1), 0).is_err());
    }
}
