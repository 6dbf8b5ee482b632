//! The optimization loop: sample, estimate, update.

use alloc::vec::Vec;

use crate::estimators::{assemble, EstimatorBundle};
use crate::optimizers::Optimizer;
use crate::sampler::{sample_batch, SamplerConfig, WalkerEnsemble};
use crate::system::MolecularSystem;
use crate::wavefunction::Wavefunction;
use crate::{Error, Result};

/// One optimizer step as written to the trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub step: u64,
    pub raw_energy: f64,
    pub clipped_energy: f64,
    pub energy_variance: f64,
    pub acceptance_rate: f64,
    pub effective_rank: Option<usize>,
    pub r_max: Option<usize>,
    pub ssi_iterations: Option<usize>,
    pub sigma_drift: Option<f64>,
    pub projector_drift: Option<f64>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VmcConfig {
    pub sampler: SamplerConfig,
    /// Samples per step; defaults to one per walker.
    pub n_samples: usize,
    pub clip_n_std: f64,
}

impl Default for VmcConfig {
    fn default() -> Self {
        let sampler = SamplerConfig::default();
        Self { n_samples: sampler.walkers, sampler, clip_n_std: 5.0 }
    }
}

#[derive(Debug, Clone)]
pub struct VmcRun<W: Wavefunction> {
    pub system: MolecularSystem,
    pub wavefunction: W,
    pub ensemble: WalkerEnsemble,
    pub optimizer: Optimizer,
    pub config: VmcConfig,
    /// Completed optimizer steps.
    pub step: u64,
}

impl<W: Wavefunction> VmcRun<W> {
    pub fn new(
        system: MolecularSystem,
        wavefunction: W,
        optimizer: Optimizer,
        config: VmcConfig,
        seed: u64,
    ) -> Result<Self> {
        if config.n_samples < 2 {
            return Err(Error::DegenerateBatch(config.n_samples));
        }
        let ensemble = WalkerEnsemble::new(
            &system,
            &wavefunction,
            config.sampler.walkers,
            seed,
            config.sampler.proposal_std,
        )?;
        Ok(Self { system, wavefunction, ensemble, optimizer, config, step: 0 })
    }

    /// Draws a batch at the current parameters and assembles the estimators.
    pub fn estimate(&mut self) -> Result<EstimatorBundle> {
        let batch = sample_batch(
            &mut self.ensemble,
            &self.system,
            &self.wavefunction,
            &self.config.sampler,
            self.config.n_samples,
        )?;
        assemble(&batch, self.config.clip_n_std)
    }

    /// One full optimizer step. The recorded energies belong to the
    /// parameters before the update.
    pub fn step(&mut self) -> Result<TraceRecord> {
        let bundle = self.estimate()?;
        let mut theta = self.wavefunction.params().to_vec();
        let diag = self.optimizer.step(&mut theta, &bundle, self.step)?;
        self.wavefunction.set_params(&theta)?;
        self.ensemble.refresh(&self.wavefunction)?;
        self.step += 1;
        Ok(TraceRecord {
            step: self.step,
            raw_energy: bundle.raw_energy,
            clipped_energy: bundle.loss,
            energy_variance: bundle.energy_variance,
            acceptance_rate: self.ensemble.last_acceptance(),
            effective_rank: diag.rank,
            r_max: diag.r_max,
            ssi_iterations: diag.ssi.map(|r| r.iterations_used),
            sigma_drift: diag.drift.map(|d| d.0),
            projector_drift: diag.drift.map(|d| d.1),
            wall_ms: 0.0,
        })
    }
}

/// Trailing moving average; entry `i` averages the last `min(window, i+1)`
/// values.
pub fn smooth_trace(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    (0..values.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            let w = &values[lo..=i];
            w.iter().sum::<f64>() / w.len() as f64
        })
        .collect()
}

/// `min(10000, total_steps / 10)`, at least 1.
pub fn default_smoothing_window(total_steps: u64) -> usize {
    ((total_steps / 10).min(10_000) as usize).max(1)
}
