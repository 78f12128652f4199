//! Flat `key = value` run configuration.
//!
//! Every tunable default in the library has a key here, so a single small
//! text file (plus `--set` overrides, which win) pins an entire run. Keys
//! not in the table are rejected; a few keys accept `auto` and are
//! resolved per flow case at the point of use.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown config key {key:?} (see `RunConfig::help`) ")]
    UnknownKey { key: String },
    #[error("config key {key:?}: cannot parse {value:?} as {wanted}")]
    BadValue { key: String, value: String, wanted: &'static str },
    #[error("config line {line}: expected `key = value`, got {text:?}")]
    BadLine { line: usize, text: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `(key, default, help)` for every recognized key. `auto` defaults are
/// resolved per case by the consumer.
const DEFAULTS: &[(&str, &str, &str)] = &[
    ("sim.n_particles", "8000", "particle count (cubic lattice, rounded to a full side)"),
    ("sim.dt", "0.001", "solver time step"),
    ("sim.n_steps", "auto", "solver steps: auto = 1000 (tgv) / 120000 (rpf)"),
    ("sim.subsample_every", "auto", "store every k-th frame: auto = 1 (tgv) / 10 (rpf)"),
    ("sim.rho0", "1.0", "reference density"),
    ("sim.c0", "10.0", "artificial speed of sound"),
    ("sim.nu", "0.01", "kinematic viscosity"),
    ("sim.p_background", "5.0", "transport-velocity background pressure"),
    ("sim.h_factor", "1.0", "smoothing length as a multiple of lattice spacing"),
    ("sim.jitter", "0.05", "initial lattice jitter fraction"),
    ("sim.divergence_free", "false", "use the projected divergence-free Taylor-Green start"),
    ("sim.f0", "1.0", "reverse-Poiseuille forcing magnitude"),
    ("dataset.base_seed", "0", "first seed of the dataset generation sweep"),
    ("features.history", "5", "past velocities per node"),
    ("features.radius_factor", "1.5", "connectivity radius in units of mean particle spacing"),
    ("features.noise_std", "6.7e-4", "random-walk training noise, accumulated std"),
    ("features.force_concat", "false", "append force·dt² to node features"),
    ("model.latent", "64", "latent width"),
    ("model.blocks", "3", "message-passing blocks"),
    ("model.hidden", "2", "hidden layers per MLP"),
    ("model.seed", "0", "parameter initialization seed"),
    ("train.steps", "5000", "optimizer updates"),
    ("train.batch", "1", "samples averaged per update"),
    ("train.lr_init", "1e-4", "initial learning rate"),
    ("train.lr_final", "1e-6", "floor learning rate"),
    ("train.decay_steps", "5000000", "exponential-decay scale in steps"),
    ("train.seed", "0", "sampling / noise seed"),
    ("train.val_every", "250", "validation cadence in steps (0 = off)"),
    ("train.val_samples", "8", "frames in the frozen validation batch"),
    ("train.log_every", "100", "loss log cadence in steps (0 = off)"),
    ("eval.steps", "100", "rollout length"),
    ("eval.sinkhorn_every", "10", "evaluate Sinkhorn every k-th step (0 = off)"),
    ("eval.eps", "auto", "Sinkhorn regularization: auto = 0.01·(mean NN distance)²"),
    ("eval.timing_repeats", "10", "timed repeats for the per-step median"),
];

/// The resolved run configuration: defaults, overlaid by an optional file,
/// overlaid by `--set` pairs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    overrides: BTreeMap<String, String>,
}

impl RunConfig {
    /// Loads `key = value` lines; `#` starts a comment, blank lines are
    /// skipped, unknown keys are errors.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let mut config = RunConfig::default();
        let text = std::fs::read_to_string(path)?;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::BadLine {
                line: idx + 1,
                text: raw.to_string(),
            })?;
            config.set(key.trim(), value.trim())?;
        }
        Ok(config)
    }

    /// Sets one key, rejecting unknown ones.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        if !DEFAULTS.iter().any(|&(k, _, _)| k == key) {
            return Err(ConfigError::UnknownKey { key: key.to_string() });
        }
        self.overrides.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Applies `key=value` pairs as given on the command line.
    pub fn apply_sets(&mut self, sets: &[String]) -> Result<(), ConfigError> {
        for pair in sets {
            let (key, value) = pair.split_once('=').ok_or_else(|| ConfigError::BadLine {
                line: 0,
                text: pair.clone(),
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// The effective value of a key (override or default).
    pub fn get(&self, key: &str) -> &str {
        if let Some(v) = self.overrides.get(key) {
            return v;
        }
        DEFAULTS
            .iter()
            .find(|&&(k, _, _)| k == key)
            .map(|&(_, d, _)| d)
            .unwrap_or_else(|| panic!("config key {key:?} not in the defaults table"))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, wanted: &'static str) -> Result<T, ConfigError> {
        let value = self.get(key);
        value.parse().map_err(|_| ConfigError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
            wanted,
        })
    }

    pub fn f64(&self, key: &str) -> Result<f64, ConfigError> {
        self.parse(key, "a number")
    }

    pub fn usize(&self, key: &str) -> Result<usize, ConfigError> {
        self.parse(key, "a non-negative integer")
    }

    pub fn u64(&self, key: &str) -> Result<u64, ConfigError> {
        self.parse(key, "a non-negative integer")
    }

    pub fn bool(&self, key: &str) -> Result<bool, ConfigError> {
        self.parse(key, "true or false")
    }

    /// `auto` → `None`, anything else parsed as usize.
    pub fn auto_usize(&self, key: &str) -> Result<Option<usize>, ConfigError> {
        if self.get(key) == "auto" {
            return Ok(None);
        }
        self.usize(key).map(Some)
    }

    /// `auto` → `None`, anything else parsed as f64.
    pub fn auto_f64(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        if self.get(key) == "auto" {
            return Ok(None);
        }
        self.f64(key).map(Some)
    }

    /// Every key with its effective value, in table order.
    pub fn resolved(&self) -> impl Iterator<Item = (&'static str, &str)> {
        DEFAULTS.iter().map(move |&(k, _, _)| (k, self.get(k)))
    }

    /// Logs the fully-resolved configuration, one key per line.
    pub fn log_resolved(&self) {
        for (key, value) in self.resolved() {
            log::info!("config {key} = {value}");
        }
    }

    /// Human-readable table of keys, defaults and meanings.
    pub fn help() -> String {
        let mut out = String::new();
        for &(key, default, help) in DEFAULTS {
            let _ = writeln!(out, "{key:<24} {default:<10} {help}");
        }
        out
    }
}
