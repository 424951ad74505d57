//! Run configuration documents (JSON).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::doe::{DEFAULT_IG_N_MC, DEFAULT_N_Y};
use crate::error::{Error, Result};
use crate::experiments::exp2_fit_config;
use crate::io;
use crate::kriging::FitConfig;
use crate::rare_event::{Direction, EnvironmentDistribution, EventSpec, Marginal, DEFAULT_N_MC};
use crate::scenarios::{LaneChangeParams, SplitSpec};

/// Environment distribution as written in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub seed: Option<u64>,
    pub marginals: Vec<Marginal>,
}

impl EnvConfig {
    pub fn distribution(&self) -> Result<EnvironmentDistribution> {
        EnvironmentDistribution::new(self.marginals.clone(), self.description.clone())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        io::read_json(path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventConfig {
    pub gamma: f64,
    pub direction: Direction,
}

impl EventConfig {
    pub fn spec(&self) -> Result<EventSpec> {
        if !self.gamma.is_finite() {
            return Err(Error::invalid("event threshold must be finite"));
        }
        EventSpec::new(self.gamma, self.direction)
    }
}

fn default_n_mc() -> usize {
    DEFAULT_N_MC
}

fn default_n_y() -> usize {
    DEFAULT_N_Y
}

fn default_ig_n_mc() -> usize {
    DEFAULT_IG_N_MC
}

fn default_runs() -> usize {
    1
}

/// Everything a command may need besides its positional inputs.
///
/// `seed` has no default; it must be present in the document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default)]
    pub fit: FitConfig,
    /// Environment samples for probability estimates.
    #[serde(default = "default_n_mc")]
    pub n_mc: usize,
    /// Stratified draws of the hypothetical observation in information gain.
    #[serde(default = "default_n_y")]
    pub n_y: usize,
    /// Environment samples inside information gain.
    #[serde(default = "default_ig_n_mc")]
    pub ig_n_mc: usize,
    #[serde(default)]
    pub environment: Option<EnvConfig>,
    #[serde(default)]
    pub event: Option<EventConfig>,
    /// Per-level experiment costs, lowest level first.
    #[serde(default)]
    pub costs: Option<Vec<f64>>,
    /// Levels considered by `design-next`.
    #[serde(default)]
    pub levels: Option<Vec<usize>>,
    #[serde(default)]
    pub lane_change: LaneChangeParams,
    #[serde(default)]
    pub split: SplitSpec,
    /// Fit settings for the lane-change reproduction.
    #[serde(default = "exp2_fit_config")]
    pub exp2_fit: FitConfig,
    #[serde(default = "default_runs")]
    pub exp2_runs: usize,
    #[serde(default)]
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub model: Option<PathBuf>,
    #[serde(default)]
    pub candidates: Option<PathBuf>,
}

impl RunConfig {
    /// Defaults for everything except the seed.
    pub fn with_seed(seed: u64) -> Self {
        RunConfig {
            seed,
            fit: FitConfig::default(),
            n_mc: DEFAULT_N_MC,
            n_y: DEFAULT_N_Y,
            ig_n_mc: DEFAULT_IG_N_MC,
            environment: None,
            event: None,
            costs: None,
            levels: None,
            lane_change: LaneChangeParams::default(),
            split: SplitSpec::default(),
            exp2_fit: exp2_fit_config(),
            exp2_runs: default_runs(),
            data: None,
            model: None,
            candidates: None,
        }
    }

    /// Parses and validates; relative paths resolve against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg: RunConfig = io::read_json(path)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        for p in [&mut cfg.data, &mut cfg.model, &mut cfg.candidates].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.fit.validate()?;
        self.exp2_fit.validate()?;
        for (name, v) in [
            ("n_mc", self.n_mc),
            ("n_y", self.n_y),
            ("ig_n_mc", self.ig_n_mc),
            ("exp2_runs", self.exp2_runs),
        ] {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if let Some(c) = &self.costs {
            crate::doe::LevelCosts::new(c.clone())?;
        }
        if let Some(levels) = &self.levels {
            if levels.is_empty() || levels.contains(&0) {
                return Err(Error::invalid("levels must be a nonempty list of values >= 1"));
            }
        }
        if let Some(env) = &self.environment {
            env.distribution()?;
        }
        if let Some(ev) = &self.event {
            ev.spec()?;
        }
        if !(self.lane_change.reaction_delay >= 0.0 && self.lane_change.decel > 0.0) {
            return Err(Error::invalid("lane-change parameters need delay >= 0 and decel > 0"));
        }
        Ok(())
    }
}
