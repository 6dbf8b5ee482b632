//! Metropolis-Hastings sampling of `|psi|^2` with an ensemble of walkers.

use alloc::vec::Vec;

// Float math for no_std; unused when a dependency links std.
#[cfg(not(test))]
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::estimators::SampleBatch;
use crate::system::{local_energy, ElectronConfiguration, MolecularSystem};
use crate::wavefunction::Wavefunction;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub walkers: usize,
    pub burn_in: usize,
    /// Metropolis sweeps between consecutive samples of a walker.
    pub thinning: usize,
    pub proposal_std: f64,
    /// Acceptance rate the burn-in adaptation steers toward.
    pub target_acceptance: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { walkers: 2048, burn_in: 1000, thinning: 10, proposal_std: 0.5, target_acceptance: 0.5 }
    }
}

/// Walker positions with their cached `log|psi|` and private RNG streams.
#[derive(Debug, Clone)]
pub struct WalkerEnsemble {
    seed: u64,
    walkers: Vec<ElectronConfiguration>,
    log_psi: Vec<f64>,
    rngs: Vec<ChaCha8Rng>,
    pub proposal_std: f64,
    burned_in: bool,
    accepted: u64,
    proposed: u64,
    last_acceptance: f64,
}

/// Stream of walker `w` for run seed `seed`.
pub fn walker_rng(seed: u64, w: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(w as u64);
    rng
}

impl WalkerEnsemble {
    /// Places electrons in unit Gaussians around nuclei, filling each
    /// nucleus up to its charge in turn, and redraws any start at a node.
    pub fn new<W: Wavefunction + ?Sized>(
        sys: &MolecularSystem,
        wf: &W,
        n_walkers: usize,
        seed: u64,
        proposal_std: f64,
    ) -> Result<Self> {
        if n_walkers == 0 {
            return Err(Error::InvalidParameter("walker count must be positive"));
        }
        if !(proposal_std > 0.0 && proposal_std.is_finite()) {
            return Err(Error::InvalidParameter("proposal_std must be positive"));
        }
        let mut anchors = Vec::with_capacity(sys.n_electrons());
        'fill: loop {
            for nuc in sys.nuclei() {
                for _ in 0..nuc.charge {
                    if anchors.len() == sys.n_electrons() {
                        break 'fill;
                    }
                    anchors.push(nuc.position);
                }
            }
        }
        // Alternate spins over the anchors so both channels sit on every atom.
        let spins = sys.spins();
        let (mut up, mut down) = (0, sys.n_up());
        let mut order = Vec::with_capacity(anchors.len());
        for k in 0..anchors.len() {
            let take_up = (k % 2 == 0 && up < sys.n_up()) || down == sys.n_electrons();
            if take_up {
                order.push(up);
                up += 1;
            } else {
                order.push(down);
                down += 1;
            }
        }
        let mut placed = alloc::vec![[0.0; 3]; anchors.len()];
        let mut walkers = Vec::with_capacity(n_walkers);
        let mut log_psi = Vec::with_capacity(n_walkers);
        let mut rngs = Vec::with_capacity(n_walkers);
        for w in 0..n_walkers {
            let mut rng = walker_rng(seed, w);
            let mut attempts = 0;
            loop {
                for (k, a) in anchors.iter().enumerate() {
                    placed[order[k]] = core::array::from_fn(|c| a[c] + rng.sample::<f64, _>(StandardNormal));
                }
                let x = ElectronConfiguration::new(placed.clone(), spins.clone())?;
                let (l, _) = wf.log_psi(&x)?;
                if l.is_nan() {
                    return Err(Error::NanLogPsi { walker: w });
                }
                if l.is_finite() {
                    walkers.push(x);
                    log_psi.push(l);
                    break;
                }
                attempts += 1;
                if attempts >= 100 {
                    return Err(Error::NodeProximity);
                }
            }
            rngs.push(rng);
        }
        Ok(Self {
            seed,
            walkers,
            log_psi,
            rngs,
            proposal_std,
            burned_in: false,
            accepted: 0,
            proposed: 0,
            last_acceptance: 0.0,
        })
    }

    /// Rebuilds an ensemble from checkpointed parts. `word_pos` holds each
    /// walker stream's position.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        seed: u64,
        walkers: Vec<ElectronConfiguration>,
        log_psi: Vec<f64>,
        word_pos: &[u128],
        proposal_std: f64,
        burned_in: bool,
        counters: (u64, u64),
        last_acceptance: f64,
    ) -> Result<Self> {
        if walkers.is_empty() || walkers.len() != log_psi.len() || walkers.len() != word_pos.len() {
            return Err(Error::DimensionMismatch("ensemble parts"));
        }
        let rngs = word_pos
            .iter()
            .enumerate()
            .map(|(w, &p)| {
                let mut rng = walker_rng(seed, w);
                rng.set_word_pos(p);
                rng
            })
            .collect();
        Ok(Self {
            seed,
            walkers,
            log_psi,
            rngs,
            proposal_std,
            burned_in,
            accepted: counters.0,
            proposed: counters.1,
            last_acceptance,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.walkers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.walkers.is_empty()
    }

    pub fn walkers(&self) -> &[ElectronConfiguration] {
        &self.walkers
    }

    pub fn cached_log_psi(&self) -> &[f64] {
        &self.log_psi
    }

    pub fn word_positions(&self) -> Vec<u128> {
        self.rngs.iter().map(|r| r.get_word_pos()).collect()
    }

    pub fn is_burned_in(&self) -> bool {
        self.burned_in
    }

    /// `(accepted, proposed)` over the whole run.
    pub fn counters(&self) -> (u64, u64) {
        (self.accepted, self.proposed)
    }

    /// Acceptance fraction of the most recent [`Self::advance`] call.
    pub fn last_acceptance(&self) -> f64 {
        self.last_acceptance
    }

    /// Recomputes the cached `log|psi|`, e.g. after a parameter update.
    pub fn refresh<W: Wavefunction + ?Sized>(&mut self, wf: &W) -> Result<()> {
        for (w, x) in self.walkers.iter().enumerate() {
            let l = wf.log_psi(x)?.0;
            if l.is_nan() {
                return Err(Error::NanLogPsi { walker: w });
            }
            self.log_psi[w] = l;
        }
        Ok(())
    }

    /// One sweep: every walker proposes a joint Gaussian move of all
    /// electrons. Returns the sweep's acceptance fraction.
    pub fn metropolis_step<W: Wavefunction + ?Sized>(&mut self, wf: &W, proposal_std: f64) -> Result<f64> {
        if !(proposal_std >= 0.0 && proposal_std.is_finite()) {
            return Err(Error::InvalidParameter("proposal_std must be nonnegative"));
        }
        let mut accepted = 0u64;
        for w in 0..self.walkers.len() {
            let rng = &mut self.rngs[w];
            let mut trial = self.walkers[w].clone();
            for p in trial.positions.iter_mut().flatten() {
                let xi: f64 = rng.sample(StandardNormal);
                *p += proposal_std * xi;
            }
            let u: f64 = rng.random();
            let l_new = wf.log_psi(&trial)?.0;
            if l_new.is_nan() {
                return Err(Error::NanLogPsi { walker: w });
            }
            // exp(-inf) = 0 rejects node proposals.
            if u < (2.0 * (l_new - self.log_psi[w])).exp() {
                self.walkers[w] = trial;
                self.log_psi[w] = l_new;
                accepted += 1;
            }
        }
        let n = self.walkers.len() as u64;
        self.accepted += accepted;
        self.proposed += n;
        Ok(accepted as f64 / n as f64)
    }

    /// `steps` sweeps at the current proposal width.
    pub fn advance<W: Wavefunction + ?Sized>(&mut self, wf: &W, steps: usize) -> Result<f64> {
        let (a0, p0) = (self.accepted, self.proposed);
        for _ in 0..steps {
            self.metropolis_step(wf, self.proposal_std)?;
        }
        let p = self.proposed - p0;
        self.last_acceptance = if p == 0 { 0.0 } else { (self.accepted - a0) as f64 / p as f64 };
        Ok(self.last_acceptance)
    }

    /// Equilibration sweeps with multiplicative proposal adaptation toward
    /// `target` acceptance. The width is frozen afterwards.
    pub fn burn_in<W: Wavefunction + ?Sized>(&mut self, wf: &W, steps: usize, target: f64) -> Result<()> {
        for _ in 0..steps {
            let a = self.metropolis_step(wf, self.proposal_std)?;
            self.proposal_std *= (a - target).exp();
        }
        self.burned_in = true;
        Ok(())
    }
}

/// Runs the one-time burn-in if still pending, then collects `n_samples`
/// configurations: one per walker after every `thinning` sweeps, in walker
/// order. `thinning = 0` takes the current states. Each sample is evaluated
/// for its local energy and `d log|psi| / d theta`.
pub fn sample_batch<W: Wavefunction + ?Sized>(
    ens: &mut WalkerEnsemble,
    sys: &MolecularSystem,
    wf: &W,
    cfg: &SamplerConfig,
    n_samples: usize,
) -> Result<SampleBatch> {
    if !ens.burned_in {
        ens.burn_in(wf, cfg.burn_in, cfg.target_acceptance)?;
    }
    let (a0, p0) = ens.counters();
    let mut configs = Vec::with_capacity(n_samples);
    while configs.len() < n_samples {
        for _ in 0..cfg.thinning {
            ens.metropolis_step(wf, ens.proposal_std)?;
        }
        let take = (n_samples - configs.len()).min(ens.len());
        configs.extend_from_slice(&ens.walkers[..take]);
    }
    let (a1, p1) = ens.counters();
    ens.last_acceptance = if p1 == p0 { 0.0 } else { (a1 - a0) as f64 / (p1 - p0) as f64 };
    let mut energies = Vec::with_capacity(n_samples);
    let mut logderivs = Vec::with_capacity(n_samples);
    for x in &configs {
        energies.push(local_energy(sys, wf, x)?);
        logderivs.push(wf.grad_theta_log_psi(x)?);
    }
    SampleBatch::new(configs, energies, logderivs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavefunction::{AceOptions, AceWavefunction};
    use std::vec;

    /// One electron with `log|psi| = f(r)`.
    struct Analytic<F: Fn(&[f64; 3]) -> f64>(F);

    impl<F: Fn(&[f64; 3]) -> f64> Wavefunction for Analytic<F> {
        fn n_params(&self) -> usize {
            0
        }
        fn params(&self) -> &[f64] {
            &[]
        }
        fn set_params(&mut self, _: &[f64]) -> Result<()> {
            Ok(())
        }
        fn log_psi(&self, x: &ElectronConfiguration) -> Result<(f64, f64)> {
            let l = (self.0)(&x.positions[0]);
            Ok((l, if l.is_finite() { 1.0 } else { 0.0 }))
        }
        fn grad_theta_log_psi(&self, _: &ElectronConfiguration) -> Result<Vec<f64>> {
            Ok(Vec::new())
        }
    }

    fn gaussian() -> Analytic<impl Fn(&[f64; 3]) -> f64> {
        // |psi|^2 is a standard normal in each coordinate.
        Analytic(|r: &[f64; 3]| -(r[0] * r[0] + r[1] * r[1] + r[2] * r[2]) / 4.0)
    }

    fn hydrogen() -> (MolecularSystem, AceWavefunction) {
        let sys = MolecularSystem::preset("H").unwrap();
        let opts = AceOptions { correlation_order: 1, init_noise: 0.0, ..AceOptions::default() };
        let wf = AceWavefunction::for_system(&sys, &opts, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        (sys, wf)
    }

    /// Mean over walkers of per-walker means, with the standard error taken
    /// from the spread of those (independent) walker means.
    fn walker_mean_and_se(per_walker: &[Vec<f64>]) -> (f64, f64) {
        let means: Vec<f64> = per_walker.iter().map(|v| v.iter().sum::<f64>() / v.len() as f64).collect();
        let n = means.len() as f64;
        let m = means.iter().sum::<f64>() / n;
        let var = means.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        (m, (var / n).sqrt())
    }

    #[test]
    fn standard_normal_moments() {
        let sys = MolecularSystem::preset("H").unwrap();
        let wf = gaussian();
        let (walkers, per) = (1000, 1000);
        let mut ens = WalkerEnsemble::new(&sys, &wf, walkers, 5, 1.0).unwrap();
        ens.burn_in(&wf, 200, 0.5).unwrap();
        let mut xs = vec![Vec::with_capacity(per); walkers];
        let mut x2 = vec![Vec::with_capacity(per); walkers];
        for _ in 0..per {
            ens.advance(&wf, 10).unwrap();
            for (w, c) in ens.walkers().iter().enumerate() {
                let x = c.positions[0][0];
                xs[w].push(x);
                x2[w].push(x * x);
            }
        }
        let (m1, se1) = walker_mean_and_se(&xs);
        let (m2, se2) = walker_mean_and_se(&x2);
        assert!(m1.abs() < 3.0 * se1, "mean {m1} +/- {se1}");
        assert!((m2 - m1 * m1 - 1.0).abs() < 3.0 * se2 + 2.0 * m1.abs() * se1, "variance {m2} +/- {se2}");
        let a = ens.last_acceptance();
        assert!(a > 0.3 && a < 0.7, "acceptance {a}");
    }

    #[test]
    fn hydrogen_mean_radius() {
        let (sys, wf) = hydrogen();
        let (walkers, per) = (500, 200);
        let mut ens = WalkerEnsemble::new(&sys, &wf, walkers, 17, 0.5).unwrap();
        ens.burn_in(&wf, 300, 0.5).unwrap();
        let mut rs = vec![Vec::with_capacity(per); walkers];
        for _ in 0..per {
            ens.advance(&wf, 5).unwrap();
            for (w, c) in ens.walkers().iter().enumerate() {
                let p = c.positions[0];
                rs[w].push((p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt());
            }
        }
        let (m, se) = walker_mean_and_se(&rs);
        assert!((m - 1.5).abs() < 3.0 * se, "<r> = {m} +/- {se}");
    }

    #[test]
    fn zero_width_proposals_do_not_move() {
        let (sys, wf) = hydrogen();
        let mut ens = WalkerEnsemble::new(&sys, &wf, 16, 3, 0.5).unwrap();
        let before = ens.walkers().to_vec();
        let acc = ens.metropolis_step(&wf, 0.0).unwrap();
        assert_eq!(acc, 1.0);
        assert_eq!(ens.walkers(), &before[..]);
        assert!(ens.metropolis_step(&wf, -1.0).is_err());
    }

    #[test]
    fn proposals_into_nodes_are_rejected() {
        let sys = MolecularSystem::preset("H").unwrap();
        // psi vanishes on the half-space x > 0.
        let wf = Analytic(|r: &[f64; 3]| if r[0] > 0.0 { f64::NEG_INFINITY } else { -(r[0] * r[0] + r[1] * r[1] + r[2] * r[2]) / 4.0 });
        let mut ens = WalkerEnsemble::new(&sys, &wf, 64, 8, 1.0).unwrap();
        assert!(ens.walkers().iter().all(|c| c.positions[0][0] <= 0.0));
        ens.advance(&wf, 200).unwrap();
        assert!(ens.walkers().iter().all(|c| c.positions[0][0] <= 0.0));
        assert!(ens.cached_log_psi().iter().all(|l| l.is_finite()));
    }

    #[test]
    fn nan_log_psi_is_an_error() {
        let sys = MolecularSystem::preset("H").unwrap();
        let wf = Analytic(|_: &[f64; 3]| f64::NAN);
        assert!(matches!(WalkerEnsemble::new(&sys, &wf, 2, 0, 0.5), Err(Error::NanLogPsi { walker: 0 })));
    }

    #[test]
    fn same_seed_same_chain_and_resumable() {
        let (sys, wf) = hydrogen();
        let mut a = WalkerEnsemble::new(&sys, &wf, 8, 42, 0.5).unwrap();
        let mut b = WalkerEnsemble::new(&sys, &wf, 8, 42, 0.5).unwrap();
        a.burn_in(&wf, 20, 0.5).unwrap();
        b.burn_in(&wf, 20, 0.5).unwrap();
        assert_eq!(a.walkers(), b.walkers());
        assert_eq!(a.proposal_std, b.proposal_std);

        let mut c = WalkerEnsemble::from_parts(
            a.seed(),
            a.walkers().to_vec(),
            a.cached_log_psi().to_vec(),
            &a.word_positions(),
            a.proposal_std,
            a.is_burned_in(),
            a.counters(),
            a.last_acceptance(),
        )
        .unwrap();
        a.advance(&wf, 15).unwrap();
        c.advance(&wf, 15).unwrap();
        assert_eq!(a.walkers(), c.walkers());
        assert_eq!(a.cached_log_psi(), c.cached_log_psi());
        assert_eq!(a.counters(), c.counters());

        let d = WalkerEnsemble::new(&sys, &wf, 8, 43, 0.5).unwrap();
        assert_ne!(d.walkers(), b.walkers());
    }

    #[test]
    fn sample_batch_burns_in_once_and_fills() {
        let (sys, wf) = hydrogen();
        let cfg = SamplerConfig { walkers: 6, burn_in: 10, thinning: 2, ..SamplerConfig::default() };
        let mut ens = WalkerEnsemble::new(&sys, &wf, cfg.walkers, 1, cfg.proposal_std).unwrap();
        let b = sample_batch(&mut ens, &sys, &wf, &cfg, 15).unwrap();
        assert!(ens.is_burned_in());
        assert_eq!(b.len(), 15);
        // burn-in plus three thinning rounds (6 + 6 + 3 samples)
        assert_eq!(ens.counters().1, 6 * (10 + 3 * 2));
        assert!(b.local_energies.iter().all(|e| (e + 0.5).abs() < 1e-6));
        assert!(b.theta_logderivs.iter().all(|d| d.len() == wf.n_params()));
        let std_after = ens.proposal_std;
        sample_batch(&mut ens, &sys, &wf, &cfg, 6).unwrap();
        assert_eq!(ens.proposal_std, std_after);
        assert_eq!(ens.counters().1, 6 * (10 + 3 * 2 + 2));
    }

    #[test]
    fn electrons_start_near_their_nuclei() {
        let sys = MolecularSystem::preset("LiH").unwrap();
        let wf = gaussian();
        let ens = WalkerEnsemble::new(&sys, &wf, 200, 2, 0.5).unwrap();
        // Up electrons 0,1 and down 2,3; anchors are Li, Li, Li, H in order
        // and spins alternate, so electron 1 (second up) sits on Li and the
        // second down electron on H.
        let mean_z = |e: usize| ens.walkers().iter().map(|c| c.positions[e][2]).sum::<f64>() / 200.0;
        assert!(mean_z(0).abs() < 0.3);
        assert!((mean_z(3) - 3.015).abs() < 0.3);
    }

    #[test]
    fn invalid_construction() {
        let (sys, wf) = hydrogen();
        assert!(WalkerEnsemble::new(&sys, &wf, 0, 0, 0.5).is_err());
        assert!(WalkerEnsemble::new(&sys, &wf, 4, 0, 0.0).is_err());
    }
}
