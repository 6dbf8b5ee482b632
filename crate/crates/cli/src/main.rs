use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wssr_cli::checkpoint::Checkpoint;
use wssr_cli::config::{keys_help, RunConfig};
use wssr_cli::runner::{describe, execute, load_for_resume, RunError};
use wssr_core::system::PRESETS;

#[derive(Parser)]
#[command(name = "wssr", version, about = "Variational Monte Carlo with warm-started stochastic reconfiguration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an optimization from a configuration file or a checkpoint.
    #[command(after_long_help = keys_help())]
    Run {
        /// INI configuration file (optional when resuming).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Run seed (walker streams, initial coefficients, sketches).
        #[arg(long)]
        seed: Option<u64>,
        /// Total number of optimizer steps.
        #[arg(long)]
        steps: Option<u64>,
        /// sgd, sr, minsr, spring, wssr or rssr.
        #[arg(long)]
        optimizer: Option<String>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue from this checkpoint, using its embedded configuration.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Print every n-th trace record (0 disables).
        #[arg(long, default_value_t = 100)]
        print_every: u64,
    },
    /// Summarize a checkpoint file.
    Inspect {
        #[arg(long)]
        ckpt: PathBuf,
    },
    /// List the built-in systems.
    Presets,
}

fn run_command(
    config: Option<PathBuf>,
    seed: Option<u64>,
    steps: Option<u64>,
    optimizer: Option<String>,
    out: Option<PathBuf>,
    resume: Option<PathBuf>,
    print_every: u64,
) -> Result<(), RunError> {
    let mut overrides: Vec<(&str, &str, String)> = Vec::new();
    if let Some(s) = steps {
        overrides.push(("run", "steps", s.to_string()));
    }
    if let Some(o) = &out {
        overrides.push(("run", "out", o.display().to_string()));
    }
    let (cfg, ckpt) = match resume {
        Some(path) => {
            if config.is_some() || seed.is_some() || optimizer.is_some() {
                return Err(RunError::Config(wssr_cli::ConfigError::Syntax(
                    "--config, --seed and --optimizer cannot change a resumed run".into(),
                )));
            }
            let (cfg, ckpt) = load_for_resume(&path, &overrides)?;
            (cfg, Some(ckpt))
        }
        None => {
            if let Some(s) = seed {
                overrides.push(("run", "seed", s.to_string()));
            }
            if let Some(o) = optimizer {
                overrides.push(("optimizer", "name", o));
            }
            let text = match &config {
                Some(p) => std::fs::read_to_string(p)?,
                None => String::new(),
            };
            (RunConfig::parse_with_overrides(&text, &overrides)?, None)
        }
    };
    let outcome = execute(&cfg, ckpt.as_ref(), |r| {
        if print_every > 0 && (r.step % print_every == 0 || r.step == cfg.steps) {
            println!(
                "step {:>7}  E {:.6}  var {:.4e}  acc {:.3}",
                r.step, r.clipped_energy, r.energy_variance, r.acceptance_rate
            );
        }
    })?;
    println!(
        "finished {} steps; smoothed energy {:.8} (window {}); trace {}; checkpoint {}",
        outcome.steps,
        outcome.smoothed_energy,
        cfg.smoothing_window(),
        outcome.trace.display(),
        outcome.checkpoint.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, seed, steps, optimizer, out, resume, print_every } => {
            run_command(config, seed, steps, optimizer, out, resume, print_every)
        }
        Command::Inspect { ckpt } => Checkpoint::load(&ckpt)
            .map_err(RunError::from)
            .and_then(|c| describe(&c))
            .map(|s| print!("{s}")),
        Command::Presets => {
            for (name, nuclei, up, down) in PRESETS {
                let charges: Vec<String> = nuclei.iter().map(|n| n.0.to_string()).collect();
                println!("{name:<4} Z = {:<6} {up} up, {down} down", charges.join(","));
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
