//! Run configuration: a flat, sectioned INI file.
//!
//! Every key has a default, so an empty file is a valid configuration.
//! Unknown sections or keys are rejected. [`KEYS`] is the single source for
//! validation, defaults and the `--help` listing.

use std::collections::BTreeMap;
use std::path::PathBuf;

use ini::Ini;
use wssr_core::optimizers::{LearningRateSchedule, OptimizerKind, SrRegularization, WssrConfig, OPTIMIZER_NAMES};
use wssr_core::sampler::SamplerConfig;
use wssr_core::svd::SsiOptions;
use wssr_core::system::{MolecularSystem, Nucleus, PRESETS};
use wssr_core::vmc::VmcConfig;
use wssr_core::wavefunction::{AceOptions, BasisOptions, DerivativeProvider};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("cannot parse configuration: {0}")]
    Syntax(String),
    #[error("unknown section [{0}]")]
    UnknownSection(String),
    #[error("unknown key `{key}` in section [{section}]")]
    UnknownKey { section: String, key: String },
    #[error("invalid value `{value}` for {section}.{key}: {reason}")]
    InvalidValue { section: String, key: String, value: String, reason: String },
}

pub struct KeySpec {
    pub section: &'static str,
    pub key: &'static str,
    pub default: &'static str,
    pub help: &'static str,
}

const fn k(section: &'static str, key: &'static str, default: &'static str, help: &'static str) -> KeySpec {
    KeySpec { section, key, default, help }
}

pub const KEYS: &[KeySpec] = &[
    k("run", "steps", "1000", "number of optimizer steps (k_max)"),
    k("run", "seed", "0", "seed for initialization, walkers and sketches"),
    k("run", "out", "wssr-out", "output directory for trace.csv and checkpoint.bin"),
    k("run", "checkpoint_every", "100", "write a checkpoint every N steps (0: only at the end)"),
    k("run", "smoothing_window", "auto", "energy smoothing window; auto = min(10000, steps/10)"),
    k("run", "record_timing", "true", "write per-step wall time to the trace (false writes 0)"),
    k("system", "preset", "He", "built-in system name, or `custom`"),
    k("system", "nuclei", "", "custom nuclei as `Z x y z; Z x y z` in Bohr"),
    k("system", "n_up", "auto", "spin-up electrons (custom systems)"),
    k("system", "n_down", "auto", "spin-down electrons (custom systems)"),
    k("system", "nuclear_repulsion", "true", "add the constant nucleus-nucleus energy"),
    k("wavefunction", "correlation_order", "2", "maximal correlation order of the ACE tuples"),
    k("wavefunction", "degree_cap", "1", "cap on the summed tuple degree, or `none`"),
    k("wavefunction", "n_max", "0", "maximal radial power n in r^n exp(-zeta r)"),
    k("wavefunction", "l_max", "1", "maximal angular momentum (at most 2)"),
    k("wavefunction", "zetas", "auto", "comma-separated exponents; auto = {Z, Z/2, 1} per nucleus"),
    k("wavefunction", "jastrow", "true", "include the electron-electron cusp Jastrow factor"),
    k("wavefunction", "init_noise", "0.01", "Gaussian noise added to the initial coefficients"),
    k("wavefunction", "derivatives", "finite-difference", "electron derivatives: finite-difference or analytic"),
    k("sampler", "walkers", "2048", "number of Metropolis walkers"),
    k("sampler", "burn_in", "1000", "equilibration sweeps before the first step"),
    k("sampler", "thinning", "10", "sweeps between consecutive samples"),
    k("sampler", "proposal_std", "0.5", "initial Gaussian proposal width (Bohr)"),
    k("sampler", "target_acceptance", "0.5", "acceptance rate targeted during burn-in"),
    k("sampler", "samples", "auto", "samples per step; auto = walkers"),
    k("estimators", "clip_n_std", "5", "local-energy clipping width in standard deviations, or `none`"),
    k("optimizer", "name", "wssr", "one of sgd, sr, minsr, spring, wssr, rssr"),
    k("optimizer", "alpha", "0.015", "learning-rate scale alpha in alpha / (1 + k / beta)"),
    k("optimizer", "beta", "1000", "learning-rate decay beta"),
    k("optimizer", "sr_regularization", "shift", "full SR: shift, scale or pinv"),
    k("optimizer", "sr_eps", "0.001", "full SR shift, scale or pseudo-inverse tolerance"),
    k("optimizer", "minsr_eps", "0.001", "MinSR Tikhonov shift"),
    k("optimizer", "spring_mu", "0.99", "SPRING momentum decay"),
    k("optimizer", "spring_eps", "0.001", "SPRING Tikhonov shift"),
    k("optimizer", "delta", "0.95", "WSSR/RSSR averaging weight of the history"),
    k("optimizer", "sigma_floor", "0.001", "WSSR/RSSR floor for the orthogonal complement"),
    k("optimizer", "relative_floor", "false", "scale sigma_floor by the largest eigenvalue"),
    k("optimizer", "r_reg", "1e-6", "relative eigenvalue cutoff for the effective rank"),
    k("optimizer", "initial_rank", "400", "initial maximal rank r_max"),
    k("optimizer", "rank_growth", "0.1", "growth factor epsilon of r_max"),
    k("optimizer", "ssi_max_iters", "3", "subspace iterations per step"),
    k("optimizer", "ssi_tolerance", "1e-10", "early-exit residual of the subspace iteration"),
    k("optimizer", "oversample", "10", "RSSR sketch oversampling"),
];

/// Help text listing every key with its default.
pub fn keys_help() -> String {
    let mut out = String::from("Configuration keys (INI sections, defaults in brackets):\n");
    let mut section = "";
    for spec in KEYS {
        if spec.section != section {
            section = spec.section;
            out.push_str(&format!("\n[{section}]\n"));
        }
        let default = if spec.default.is_empty() { "(empty)" } else { spec.default };
        out.push_str(&format!("  {:<20} {} [{}]\n", spec.key, spec.help, default));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub system: MolecularSystem,
    pub wavefunction: AceOptions,
    pub derivatives: DerivativeProvider,
    pub vmc: VmcConfig,
    pub optimizer: OptimizerKind,
    pub schedule: LearningRateSchedule,
    pub steps: u64,
    pub seed: u64,
    pub out: PathBuf,
    pub checkpoint_every: u64,
    pub smoothing_window: Option<usize>,
    pub record_timing: bool,
    /// Canonical text of every key, embedded in checkpoints.
    values: BTreeMap<(String, String), String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::from_values(defaults()).expect("defaults are valid")
    }
}

fn defaults() -> BTreeMap<(String, String), String> {
    KEYS.iter().map(|s| ((s.section.to_string(), s.key.to_string()), s.default.to_string())).collect()
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::parse_with_overrides(text, &[])
    }

    /// Parses `text` and then applies `(section, key, value)` overrides.
    pub fn parse_with_overrides(text: &str, overrides: &[(&str, &str, String)]) -> Result<Self, ConfigError> {
        let ini = Ini::load_from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        let mut values = defaults();
        for (section, props) in ini.iter() {
            let Some(section) = section else {
                if let Some((key, _)) = props.iter().next() {
                    return Err(ConfigError::UnknownKey { section: String::new(), key: key.to_string() });
                }
                continue;
            };
            if !KEYS.iter().any(|s| s.section == section) {
                return Err(ConfigError::UnknownSection(section.to_string()));
            }
            for (key, value) in props.iter() {
                let slot = values
                    .get_mut(&(section.to_string(), key.to_string()))
                    .ok_or_else(|| ConfigError::UnknownKey { section: section.to_string(), key: key.to_string() })?;
                *slot = value.trim().to_string();
            }
        }
        for (section, key, value) in overrides {
            let slot = values
                .get_mut(&(section.to_string(), key.to_string()))
                .ok_or_else(|| ConfigError::UnknownKey { section: section.to_string(), key: key.to_string() })?;
            *slot = value.clone();
        }
        Self::from_values(values)
    }

    /// Every key with its effective value, in INI syntax. Parsing the result
    /// gives back an equal configuration.
    pub fn to_ini(&self) -> String {
        let mut out = String::new();
        let mut section = "";
        for spec in KEYS {
            if spec.section != section {
                if !section.is_empty() {
                    out.push('\n');
                }
                section = spec.section;
                out.push_str(&format!("[{section}]\n"));
            }
            let v = &self.values[&(spec.section.to_string(), spec.key.to_string())];
            out.push_str(&format!("{} = {}\n", spec.key, v));
        }
        out
    }

    /// Raw text value of a key.
    pub fn value(&self, section: &str, key: &str) -> Option<&str> {
        self.values.get(&(section.to_string(), key.to_string())).map(String::as_str)
    }

    pub fn smoothing_window(&self) -> usize {
        self.smoothing_window.unwrap_or_else(|| wssr_core::vmc::default_smoothing_window(self.steps))
    }

    fn from_values(values: BTreeMap<(String, String), String>) -> Result<Self, ConfigError> {
        let r = Reader { values: &values };
        let system = r.system()?;
        let walkers: usize = r.positive("sampler", "walkers")?;
        let sampler = SamplerConfig {
            walkers,
            burn_in: r.parse("sampler", "burn_in")?,
            thinning: r.parse("sampler", "thinning")?,
            proposal_std: r.positive_f64("sampler", "proposal_std")?,
            target_acceptance: r.check("sampler", "target_acceptance", |v: &f64| {
                (*v > 0.0 && *v < 1.0).then_some(()).ok_or("must lie in (0, 1)")
            })?,
        };
        let n_samples = match r.raw("sampler", "samples") {
            "auto" => walkers,
            _ => r.check("sampler", "samples", |v: &usize| (*v >= 2).then_some(()).ok_or("at least 2 samples are required"))?,
        };
        let clip_n_std = match r.raw("estimators", "clip_n_std") {
            "none" => f64::INFINITY,
            _ => r.positive_f64("estimators", "clip_n_std")?,
        };
        let vmc = VmcConfig { sampler, n_samples, clip_n_std };

        let zetas = match r.raw("wavefunction", "zetas") {
            "auto" => None,
            list => Some(
                list.split(',')
                    .map(|z| z.trim().parse::<f64>().ok().filter(|z| *z > 0.0 && z.is_finite()))
                    .collect::<Option<Vec<_>>>()
                    .filter(|v| !v.is_empty())
                    .ok_or_else(|| r.invalid("wavefunction", "zetas", "expected positive numbers separated by commas"))?,
            ),
        };
        let l_max = r.check("wavefunction", "l_max", |v: &u32| (*v <= 2).then_some(()).ok_or("at most 2 is supported"))?;
        let wavefunction = AceOptions {
            basis: BasisOptions { n_max: r.parse("wavefunction", "n_max")?, l_max, zetas },
            correlation_order: r.positive("wavefunction", "correlation_order")?,
            degree_cap: match r.raw("wavefunction", "degree_cap") {
                "none" => None,
                _ => Some(r.parse("wavefunction", "degree_cap")?),
            },
            jastrow: r.parse_bool("wavefunction", "jastrow")?,
            init_noise: r.check("wavefunction", "init_noise", |v: &f64| {
                (*v >= 0.0 && v.is_finite()).then_some(()).ok_or("must be nonnegative")
            })?,
        };
        let derivatives = match r.raw("wavefunction", "derivatives") {
            "finite-difference" => DerivativeProvider::FiniteDifference,
            "analytic" => DerivativeProvider::Analytic,
            _ => return Err(r.invalid("wavefunction", "derivatives", "expected finite-difference or analytic")),
        };

        let schedule = LearningRateSchedule::new(r.positive_f64("optimizer", "alpha")?, r.positive_f64("optimizer", "beta")?)
            .map_err(|e| r.invalid("optimizer", "alpha", &e.to_string()))?;
        let optimizer = r.optimizer()?;

        let smoothing_window = match r.raw("run", "smoothing_window") {
            "auto" => None,
            _ => Some(r.positive("run", "smoothing_window")?),
        };
        Ok(Self {
            system,
            wavefunction,
            derivatives,
            vmc,
            optimizer,
            schedule,
            steps: r.parse("run", "steps")?,
            seed: r.parse("run", "seed")?,
            out: PathBuf::from(r.raw("run", "out")),
            checkpoint_every: r.parse("run", "checkpoint_every")?,
            smoothing_window,
            record_timing: r.parse_bool("run", "record_timing")?,
            values,
        })
    }
}

struct Reader<'a> {
    values: &'a BTreeMap<(String, String), String>,
}

impl Reader<'_> {
    fn raw(&self, section: &str, key: &str) -> &str {
        self.values.get(&(section.to_string(), key.to_string())).map(String::as_str).unwrap_or("")
    }

    fn invalid(&self, section: &str, key: &str, reason: &str) -> ConfigError {
        ConfigError::InvalidValue {
            section: section.to_string(),
            key: key.to_string(),
            value: self.raw(section, key).to_string(),
            reason: reason.to_string(),
        }
    }

    fn parse<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(section, key).parse().map_err(|e: T::Err| self.invalid(section, key, &e.to_string()))
    }

    fn check<T: std::str::FromStr>(
        &self,
        section: &str,
        key: &str,
        ok: impl Fn(&T) -> Result<(), &'static str>,
    ) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.parse(section, key)?;
        ok(&v).map_err(|reason| self.invalid(section, key, reason))?;
        Ok(v)
    }

    fn positive(&self, section: &str, key: &str) -> Result<usize, ConfigError> {
        self.check(section, key, |v: &usize| (*v > 0).then_some(()).ok_or("must be positive"))
    }

    fn positive_f64(&self, section: &str, key: &str) -> Result<f64, ConfigError> {
        self.check(section, key, |v: &f64| (*v > 0.0 && v.is_finite()).then_some(()).ok_or("must be positive and finite"))
    }

    fn nonneg_f64(&self, section: &str, key: &str) -> Result<f64, ConfigError> {
        self.check(section, key, |v: &f64| (*v >= 0.0 && v.is_finite()).then_some(()).ok_or("must be nonnegative"))
    }

    fn parse_bool(&self, section: &str, key: &str) -> Result<bool, ConfigError> {
        match self.raw(section, key) {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            _ => Err(self.invalid(section, key, "expected true or false")),
        }
    }

    fn system(&self) -> Result<MolecularSystem, ConfigError> {
        let preset = self.raw("system", "preset");
        let mut sys = if preset == "custom" {
            let nuclei = self
                .raw("system", "nuclei")
                .split(';')
                .filter(|s| !s.trim().is_empty())
                .map(|entry| {
                    let parts: Vec<&str> = entry.split_whitespace().collect();
                    if parts.len() != 4 {
                        return None;
                    }
                    let charge = parts[0].parse::<u32>().ok()?;
                    let mut position = [0.0; 3];
                    for (p, s) in position.iter_mut().zip(&parts[1..]) {
                        *p = s.parse().ok()?;
                    }
                    Some(Nucleus { position, charge })
                })
                .collect::<Option<Vec<_>>>()
                .filter(|v| !v.is_empty())
                .ok_or_else(|| self.invalid("system", "nuclei", "expected `Z x y z` entries separated by `;`"))?;
            let total: usize = nuclei.iter().map(|n| n.charge as usize).sum();
            let n_up = match self.raw("system", "n_up") {
                "auto" => total.div_ceil(2),
                _ => self.parse("system", "n_up")?,
            };
            let n_down = match self.raw("system", "n_down") {
                "auto" => total.saturating_sub(n_up),
                _ => self.parse("system", "n_down")?,
            };
            MolecularSystem::new(nuclei, n_up, n_down).map_err(|e| self.invalid("system", "nuclei", &e.to_string()))?
        } else {
            for key in ["nuclei", "n_up", "n_down"] {
                let v = self.raw("system", key);
                if !(v.is_empty() || v == "auto") {
                    return Err(self.invalid("system", key, "only allowed with preset = custom"));
                }
            }
            MolecularSystem::preset(preset).ok_or_else(|| {
                let names: Vec<&str> = PRESETS.iter().map(|p| p.0).collect();
                self.invalid("system", "preset", &format!("expected custom or one of {}", names.join(", ")))
            })?
        };
        sys.nuclear_repulsion = self.parse_bool("system", "nuclear_repulsion")?;
        Ok(sys)
    }

    fn optimizer(&self) -> Result<OptimizerKind, ConfigError> {
        let s = "optimizer";
        let name = self.raw(s, "name");
        let wssr = || -> Result<WssrConfig, ConfigError> {
            let cfg = WssrConfig {
                delta: self.check(s, "delta", |v: &f64| ((0.0..1.0).contains(v)).then_some(()).ok_or("must lie in [0, 1)"))?,
                sigma_floor: self.positive_f64(s, "sigma_floor")?,
                relative_floor: self.parse_bool(s, "relative_floor")?,
                r_reg: self.check(s, "r_reg", |v: &f64| (*v > 0.0 && *v < 1.0).then_some(()).ok_or("must lie in (0, 1)"))?,
                initial_rank: self.positive(s, "initial_rank")?,
                rank_growth: self.positive_f64(s, "rank_growth")?,
                ssi: SsiOptions {
                    max_iters: self.positive(s, "ssi_max_iters")?,
                    tolerance: self.nonneg_f64(s, "ssi_tolerance")?,
                    ..SsiOptions::default()
                },
                oversample: self.parse(s, "oversample")?,
            };
            Ok(cfg)
        };
        Ok(match name {
            "sgd" => OptimizerKind::Sgd,
            "sr" => {
                let eps = self.nonneg_f64(s, "sr_eps")?;
                OptimizerKind::Sr(match self.raw(s, "sr_regularization") {
                    "shift" => SrRegularization::DiagonalShift(eps),
                    "scale" => SrRegularization::DiagonalScale(eps),
                    "pinv" => SrRegularization::PseudoInverse(eps),
                    _ => return Err(self.invalid(s, "sr_regularization", "expected shift, scale or pinv")),
                })
            }
            "minsr" => OptimizerKind::MinSr { tikhonov_eps: self.nonneg_f64(s, "minsr_eps")? },
            "spring" => OptimizerKind::Spring {
                mu: self.check(s, "spring_mu", |v: &f64| ((0.0..1.0).contains(v)).then_some(()).ok_or("must lie in [0, 1)"))?,
                tikhonov_eps: self.positive_f64(s, "spring_eps")?,
            },
            "wssr" => OptimizerKind::Wssr(wssr()?),
            "rssr" => OptimizerKind::Rssr(wssr()?),
            _ => {
                return Err(self.invalid(s, "name", &format!("expected one of {}", OPTIMIZER_NAMES.join(", "))));
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = RunConfig::parse("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.vmc.sampler.walkers, 2048);
        assert_eq!(c.vmc.sampler.burn_in, 1000);
        assert_eq!(c.vmc.sampler.thinning, 10);
        assert_eq!(c.vmc.clip_n_std, 5.0);
        assert_eq!(c.vmc.n_samples, 2048);
        assert_eq!(c.schedule, LearningRateSchedule { alpha: 0.015, beta: 1000.0 });
        assert_eq!(c.optimizer, OptimizerKind::Wssr(WssrConfig::default()));
        assert_eq!(c.system, MolecularSystem::preset("He").unwrap());
    }

    #[test]
    fn every_key_has_help_and_a_valid_default() {
        let help = keys_help();
        for spec in KEYS {
            assert!(help.contains(spec.key), "{}", spec.key);
            assert!(!spec.help.is_empty());
        }
        let mut seen = std::collections::HashSet::new();
        assert!(KEYS.iter().all(|s| seen.insert((s.section, s.key))), "duplicate key");
    }

    #[test]
    fn unknown_keys_and_sections_fail_fast() {
        assert_eq!(
            RunConfig::parse("[sampler]\nwalkerz = 3\n"),
            Err(ConfigError::UnknownKey { section: "sampler".into(), key: "walkerz".into() })
        );
        assert_eq!(RunConfig::parse("[extra]\na = 1\n"), Err(ConfigError::UnknownSection("extra".into())));
        assert!(matches!(RunConfig::parse("steps = 3\n"), Err(ConfigError::UnknownKey { .. })));
    }

    #[test]
    fn invalid_optimizer_lists_valid_names() {
        let err = RunConfig::parse("[optimizer]\nname = adam\n").unwrap_err();
        let msg = err.to_string();
        for name in OPTIMIZER_NAMES {
            assert!(msg.contains(name), "{msg}");
        }
    }

    #[test]
    fn bad_values_are_rejected() {
        for text in [
            "[sampler]\nwalkers = 0\n",
            "[sampler]\nwalkers = many\n",
            "[optimizer]\ndelta = 1.0\n",
            "[optimizer]\nname = spring\nspring_mu = 1.5\n",
            "[wavefunction]\nl_max = 3\n",
            "[wavefunction]\nzetas = 1, -2\n",
            "[system]\npreset = Xe\n",
            "[system]\nnuclei = 1 0 0 0\n",
            "[system]\npreset = custom\nnuclei = 1 0 0\n",
            "[run]\nrecord_timing = maybe\n",
        ] {
            assert!(matches!(RunConfig::parse(text), Err(ConfigError::InvalidValue { .. })), "{text}");
        }
    }

    #[test]
    fn round_trips_through_text() {
        let text = "[system]\npreset = custom\nnuclei = 3 0 0 0; 1 0 0 3.015\n\
                    [optimizer]\nname = spring\nspring_mu = 0.5\n\
                    [wavefunction]\nzetas = 1.5, 0.75\ndegree_cap = none\n\
                    [estimators]\nclip_n_std = none\n[run]\nsmoothing_window = 7\n";
        let c = RunConfig::parse(text).unwrap();
        assert_eq!(c.system.n_up(), 2);
        assert_eq!(c.system.n_down(), 2);
        assert_eq!(c.optimizer, OptimizerKind::Spring { mu: 0.5, tikhonov_eps: 1e-3 });
        assert_eq!(c.wavefunction.degree_cap, None);
        assert_eq!(c.vmc.clip_n_std, f64::INFINITY);
        assert_eq!(c.smoothing_window(), 7);
        assert_eq!(RunConfig::parse(&c.to_ini()).unwrap(), c);
    }

    #[test]
    fn overrides_apply_after_the_file() {
        let c = RunConfig::parse_with_overrides(
            "[run]\nsteps = 5\n",
            &[("run", "steps", "9".into()), ("optimizer", "name", "sgd".into())],
        )
        .unwrap();
        assert_eq!(c.steps, 9);
        assert_eq!(c.optimizer, OptimizerKind::Sgd);
        assert_eq!(c.smoothing_window(), 1);
    }
}
