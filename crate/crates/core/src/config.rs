//! JSON run configuration. Relative paths are resolved against the
//! directory holding the configuration file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bootstrap::BootstrapSettings;
use crate::engine::EngineOptions;
use crate::oracle::StructuralDgp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    CompetingRisks,
    ConditionalOnSurvival,
    Both,
    Simulate,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "competing_risks" => Ok(Mode::CompetingRisks),
            "conditional_on_survival" => Ok(Mode::ConditionalOnSurvival),
            "both" => Ok(Mode::Both),
            "simulate" => Ok(Mode::Simulate),
            other => Err(format!(
                "unknown mode `{other}` (expected competing_risks, conditional_on_survival, both or simulate)"
            )),
        }
    }
}

/// Exposure levels to compare: percentiles of the observed exposure
/// (reference, comparison) or explicit values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ContrastSpec {
    Percentiles(f64, f64),
    Levels(f64, f64),
}

impl Default for ContrastSpec {
    fn default() -> Self {
        ContrastSpec::Percentiles(25.0, 75.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Results document.
    pub json: Option<PathBuf>,
    /// Text table; printed to stdout when absent.
    pub table: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub n: usize,
    pub seed: u64,
    /// Monte Carlo subjects for the true effects.
    pub n_mc: usize,
    pub cohort_csv: Option<PathBuf>,
    pub truth_json: Option<PathBuf>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            n: 5000,
            seed: 1,
            n_mc: 100_000,
            cohort_csv: None,
            truth_json: None,
        }
    }
}

fn default_horizon() -> f64 {
    20.0
}

fn default_exposure() -> String {
    "exposure".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub input: Option<PathBuf>,
    /// Number of visits `K`; must agree with `visit_times` when given.
    #[serde(default)]
    pub n_visits: Option<usize>,
    /// `K + 1` times starting at 0. Taken from the `dgp` section when absent.
    #[serde(default)]
    pub visit_times: Vec<f64>,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    /// Baseline covariate columns; every `l0_*` column when absent.
    #[serde(default)]
    pub covariates: Option<Vec<String>>,
    #[serde(default = "default_exposure")]
    pub exposure: String,
    #[serde(default)]
    pub contrast: ContrastSpec,
    #[serde(default)]
    pub bootstrap: BootstrapSettings,
    #[serde(default)]
    pub engine: EngineOptions,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub dgp: Option<StructuralDgp>,
    #[serde(default)]
    pub simulate: SimulateConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("every field has a default")
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Read a configuration file and resolve its relative paths.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(path.to_path_buf(), e))?;
        let mut config = Self::from_json(&text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        if let Some(dir) = path.parent() {
            config.resolve_paths(dir);
        }
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        fix(&mut self.input);
        fix(&mut self.output.json);
        fix(&mut self.output.table);
        fix(&mut self.simulate.cohort_csv);
        fix(&mut self.simulate.truth_json);
    }

    /// Visit grid in effect: `visit_times`, or the structural model's.
    pub fn grid(&self) -> Vec<f64> {
        match (&self.dgp, self.visit_times.is_empty()) {
            (Some(dgp), true) => dgp.visit_times.clone(),
            _ => self.visit_times.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        let grid = self.grid();
        if grid.len() < 2 {
            return bad("visit_times needs at least two entries".into());
        }
        if let Some(k) = self.n_visits {
            if k + 1 != grid.len() {
                return bad(format!(
                    "n_visits is {k} but visit_times has {} entries",
                    grid.len()
                ));
            }
        }
        match self.contrast {
            ContrastSpec::Percentiles(a, b) => {
                for p in [a, b] {
                    if !(p > 0.0 && p < 100.0) {
                        return bad(format!("contrast percentile {p} outside (0, 100)"));
                    }
                }
                if a == b {
                    return bad("contrast percentiles must differ".into());
                }
            }
            ContrastSpec::Levels(a, b) => {
                if !(a.is_finite() && b.is_finite()) || a == b {
                    return bad("contrast levels must be finite and distinct".into());
                }
            }
        }
        let f = self.engine.death_time_fraction;
        if !(f > 0.0 && f <= 1.0) {
            return bad(format!("engine.death_time_fraction {f} outside (0, 1]"));
        }
        if self.engine.replicates == 0 {
            return bad("engine.replicates must be at least 1".into());
        }
        self.bootstrap
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        match self.mode {
            Mode::Simulate => {
                if self.dgp.is_none() {
                    return bad("mode simulate needs a dgp section".into());
                }
                if self.simulate.n == 0 {
                    return bad("simulate.n must be at least 1".into());
                }
                if self.simulate.n_mc == 0 {
                    return bad("simulate.n_mc must be at least 1".into());
                }
            }
            _ => {
                if self.input.is_none() {
                    return bad("input is required".into());
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {0}: {1}")]
    Io(PathBuf, #[source] std::io::Error),
    #[error("invalid configuration: {0}")]
    Parse(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}
