//! The run loop: build or restore a [`VmcRun`], step it, stream the trace and
//! write checkpoints.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wssr_core::optimizers::{Optimizer, OptimizerKind, OptimizerState};
use wssr_core::sampler::WalkerEnsemble;
use wssr_core::system::ElectronConfiguration;
use wssr_core::vmc::{smooth_trace, TraceRecord, VmcRun};
use wssr_core::wavefunction::{AceWavefunction, Wavefunction};

use crate::checkpoint::{Checkpoint, CheckpointError, EnsembleSnapshot};
use crate::config::{ConfigError, RunConfig};
use crate::trace::{read_trace, TraceWriter};

pub const TRACE_FILE: &str = "trace.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot set up the run: {0}")]
    Setup(wssr_core::Error),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("numerical failure at step {step}: {source}; last good state kept in {}", checkpoint.display())]
    Numerical { step: u64, source: wssr_core::Error, checkpoint: PathBuf },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    /// Process exit status: 2 for bad input, 3 for numerical aborts.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Setup(_) | Self::Checkpoint(_) => 2,
            Self::Numerical { .. } => 3,
            Self::Io(_) => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub steps: u64,
    /// Last value of the smoothed clipped-energy trace.
    pub smoothed_energy: f64,
    pub trace: PathBuf,
    pub checkpoint: PathBuf,
}

/// Fresh run state for `cfg`. The initial coefficients draw from a stream
/// no walker uses.
pub fn build(cfg: &RunConfig) -> Result<VmcRun<AceWavefunction>, RunError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(u64::MAX);
    let mut wf = AceWavefunction::for_system(&cfg.system, &cfg.wavefunction, &mut rng).map_err(RunError::Setup)?;
    wf.provider = cfg.derivatives;
    let opt = Optimizer::new(cfg.optimizer.clone(), cfg.schedule, wf.n_params(), cfg.seed).map_err(RunError::Setup)?;
    VmcRun::new(cfg.system.clone(), wf, opt, cfg.vmc.clone(), cfg.seed).map_err(RunError::Setup)
}

pub fn snapshot(cfg: &RunConfig, run: &VmcRun<AceWavefunction>) -> Checkpoint {
    let e = &run.ensemble;
    let (accepted, proposed) = e.counters();
    Checkpoint {
        config_text: cfg.to_ini(),
        step: run.step,
        theta: run.wavefunction.params().to_vec(),
        ensemble: EnsembleSnapshot {
            seed: e.seed(),
            proposal_std: e.proposal_std,
            burned_in: e.is_burned_in(),
            accepted,
            proposed,
            last_acceptance: e.last_acceptance(),
            positions: e.walkers().iter().map(|w| w.positions.clone()).collect(),
            log_psi: e.cached_log_psi().to_vec(),
            word_positions: e.word_positions(),
        },
        optimizer: run.optimizer.state.clone(),
    }
}

fn malformed(msg: &str) -> RunError {
    RunError::Checkpoint(CheckpointError::Malformed(msg.to_string()))
}

/// Rebuilds the run stored in `ckpt` under `cfg`, which must describe the
/// same model (normally the checkpoint's own configuration).
pub fn restore(cfg: &RunConfig, ckpt: &Checkpoint) -> Result<VmcRun<AceWavefunction>, RunError> {
    let mut run = build(cfg)?;
    if ckpt.theta.len() != run.wavefunction.n_params() {
        return Err(malformed("parameter count does not match the configuration"));
    }
    run.wavefunction.set_params(&ckpt.theta).map_err(RunError::Setup)?;
    let spins = cfg.system.spins();
    let e = &ckpt.ensemble;
    let walkers = e
        .positions
        .iter()
        .map(|p| ElectronConfiguration::new(p.clone(), spins.clone()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| malformed("walker configurations do not fit the system"))?;
    run.ensemble = WalkerEnsemble::from_parts(
        e.seed,
        walkers,
        e.log_psi.clone(),
        &e.word_positions,
        e.proposal_std,
        e.burned_in,
        (e.accepted, e.proposed),
        e.last_acceptance,
    )
    .map_err(RunError::Setup)?;
    let state_ok = matches!(
        (&cfg.optimizer, &ckpt.optimizer),
        (OptimizerKind::Sgd | OptimizerKind::Sr(_) | OptimizerKind::MinSr { .. }, OptimizerState::Stateless)
            | (OptimizerKind::Spring { .. }, OptimizerState::Spring(_))
            | (OptimizerKind::Wssr(_) | OptimizerKind::Rssr(_), OptimizerState::Wssr(_))
    );
    if !state_ok {
        return Err(malformed("optimizer state does not match the configured optimizer"));
    }
    run.optimizer.state = ckpt.optimizer.clone();
    run.step = ckpt.step;
    Ok(run)
}

/// Runs up to `cfg.steps` total steps, continuing from `resume` if given.
/// `progress` sees every record as it is written.
pub fn execute(
    cfg: &RunConfig,
    resume: Option<&Checkpoint>,
    mut progress: impl FnMut(&TraceRecord),
) -> Result<RunOutcome, RunError> {
    std::fs::create_dir_all(&cfg.out)?;
    let trace_path = cfg.out.join(TRACE_FILE);
    let ckpt_path = cfg.out.join(CHECKPOINT_FILE);
    let (mut run, mut trace) = match resume {
        Some(c) => (restore(cfg, c)?, TraceWriter::resume(&trace_path, c.step)?),
        None => (build(cfg)?, TraceWriter::create(&trace_path)?),
    };
    let mut energies: Vec<f64> = match resume {
        Some(_) => read_trace(&trace_path)?.iter().map(|r| r.clipped_energy).collect(),
        None => Vec::new(),
    };

    while run.step < cfg.steps {
        let last_good = run.clone();
        let t0 = Instant::now();
        let mut rec = match run.step() {
            Ok(r) => r,
            Err(source) => {
                snapshot(cfg, &last_good).save(&ckpt_path)?;
                return Err(RunError::Numerical { step: last_good.step + 1, source, checkpoint: ckpt_path });
            }
        };
        if cfg.record_timing {
            rec.wall_ms = t0.elapsed().as_secs_f64() * 1e3;
        }
        trace.write(&rec)?;
        energies.push(rec.clipped_energy);
        progress(&rec);
        if cfg.checkpoint_every > 0 && run.step % cfg.checkpoint_every == 0 && run.step < cfg.steps {
            snapshot(cfg, &run).save(&ckpt_path)?;
        }
    }
    snapshot(cfg, &run).save(&ckpt_path)?;
    let smoothed = smooth_trace(&energies, cfg.smoothing_window()).last().copied().unwrap_or(f64::NAN);
    Ok(RunOutcome { steps: run.step, smoothed_energy: smoothed, trace: trace_path, checkpoint: ckpt_path })
}

/// Human-readable summary of a checkpoint.
pub fn describe(ckpt: &Checkpoint) -> Result<String, RunError> {
    let cfg = RunConfig::parse(&ckpt.config_text)?;
    let e = &ckpt.ensemble;
    let mut out = String::new();
    let mut line = |k: &str, v: String| out.push_str(&format!("{k:<20} {v}\n"));
    line("format version", crate::checkpoint::VERSION.to_string());
    line("completed steps", format!("{} of {}", ckpt.step, cfg.steps));
    line("system", cfg.value("system", "preset").unwrap_or("?").to_string());
    line("electrons", format!("{} up, {} down", cfg.system.n_up(), cfg.system.n_down()));
    line("parameters", ckpt.theta.len().to_string());
    line("optimizer", cfg.optimizer.name().to_string());
    line("learning rate", format!("{:.6e}", cfg.schedule.eta(ckpt.step)));
    line("walkers", e.positions.len().to_string());
    line("burned in", e.burned_in.to_string());
    line("proposal std", format!("{:.6}", e.proposal_std));
    line("last acceptance", format!("{:.4}", e.last_acceptance));
    match &ckpt.optimizer {
        OptimizerState::Stateless => {}
        OptimizerState::Spring(s) => {
            let n = s.prev_update.iter().map(|v| v * v).sum::<f64>().sqrt();
            line("momentum norm", format!("{n:.6e}"));
        }
        OptimizerState::Wssr(s) => {
            line("history rank", s.obar.cols().to_string());
            line("r_max", s.r_max.to_string());
            if let Some(p) = &s.prev {
                line("leading sigma", format!("{:.6e}", p.sigma[0]));
            }
        }
    }
    Ok(out)
}

/// Loads a checkpoint and its embedded configuration, applying `overrides`.
pub fn load_for_resume(
    path: &Path,
    overrides: &[(&str, &str, String)],
) -> Result<(RunConfig, Checkpoint), RunError> {
    let ckpt = Checkpoint::load(path)?;
    let cfg = RunConfig::parse_with_overrides(&ckpt.config_text, overrides)?;
    Ok((cfg, ckpt))
}
