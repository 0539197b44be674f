//! Mediational g-formula with a time-varying mediator and death treated as
//! a nested mediator.
//!
//! The pipeline is: fit the sequential mediator and death models plus the
//! additive hazards outcome model ([`fit_model_set`]); simulate mediator and
//! survival trajectories with the exposure fed separately to the outcome,
//! death and mediator models ([`simulate_world`]); average the implied
//! outcome rate and outcome-free probability ([`phi`]); and contrast the
//! regimes into path-specific effects ([`estimate_effects`]).

mod effects;
mod models;
mod simulate;

pub use effects::{
    conditional_on_survival_effects, estimate_effects, Analysis, Effect, EffectEstimate,
    EffectTable, RegimeValue,
};
pub use models::{fit_model_set, DeathModel, FittedModelSet, ModelKind};
pub use simulate::{phi, simulate_world, CounterfactualWorld, PhiValue, SubjectTrajectory};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bootstrap::quantile;
use crate::cohort::{CohortDataset, CohortError};
use crate::estimators::EstimationError;
use crate::rng::{purpose, StreamKey};

/// Rates are reported per this many person-years.
pub const PERSON_YEARS_SCALE: f64 = 100_000.0;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("{kind} model for visit {visit}: {source}")]
    Model {
        kind: ModelKind,
        visit: usize,
        #[source]
        source: EstimationError,
    },
    #[error("outcome model: {0}")]
    Outcome(#[source] EstimationError),
    #[error(transparent)]
    Prediction(#[from] EstimationError),
    #[error(transparent)]
    Cohort(#[from] CohortError),
    #[error("cohort has no subjects")]
    EmptyCohort,
    #[error("invalid exposure contrast: {0}")]
    InvalidContrast(String),
}

impl EngineError {
    /// Estimation failure underlying this error, if any.
    pub fn estimation(&self) -> Option<&EstimationError> {
        match self {
            EngineError::Model { source, .. } => Some(source),
            EngineError::Outcome(e) | EngineError::Prediction(e) => Some(e),
            _ => None,
        }
    }
}

/// Reference level `a` and comparison level `a*` of the exposure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExposureContrast {
    pub a_ref: f64,
    pub a_cmp: f64,
}

impl ExposureContrast {
    pub fn new(a_ref: f64, a_cmp: f64) -> Result<Self, EngineError> {
        if !(a_ref.is_finite() && a_cmp.is_finite()) || a_ref == a_cmp {
            return Err(EngineError::InvalidContrast(format!(
                "levels must be finite and distinct, got {a_ref} and {a_cmp}"
            )));
        }
        Ok(ExposureContrast { a_ref, a_cmp })
    }

    /// Levels at the given exposure percentiles (0–100) of the cohort.
    pub fn from_percentiles(
        cohort: &CohortDataset,
        p_ref: f64,
        p_cmp: f64,
    ) -> Result<Self, EngineError> {
        for p in [p_ref, p_cmp] {
            if !(p > 0.0 && p < 100.0) {
                return Err(EngineError::InvalidContrast(format!(
                    "percentile {p} outside (0, 100)"
                )));
            }
        }
        let exposures = cohort.exposures();
        let level = |p: f64| quantile(&exposures, p / 100.0).map_err(|_| EngineError::EmptyCohort);
        Self::new(level(p_ref)?, level(p_cmp)?)
    }

    pub fn level(&self, l: Level) -> f64 {
        match l {
            Level::Ref => self.a_ref,
            Level::Cmp => self.a_cmp,
        }
    }

    pub fn regime(&self, outcome: Level, death: Level, mediator: Level) -> RegimeTriple {
        RegimeTriple {
            a_outcome: self.level(outcome),
            a_death: self.level(death),
            a_mediator: self.level(mediator),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Ref,
    Cmp,
}

/// Exposure levels seen by the outcome, death and mediator models:
/// the three arguments of `φ(a_Y, a_D, a_M)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeTriple {
    pub a_outcome: f64,
    pub a_death: f64,
    pub a_mediator: f64,
}

impl RegimeTriple {
    pub fn uniform(a: f64) -> Self {
        RegimeTriple {
            a_outcome: a,
            a_death: a,
            a_mediator: a,
        }
    }

    fn stream_id(&self) -> u64 {
        crate::rng::mix64(
            self.a_outcome.to_bits()
                ^ crate::rng::mix64(self.a_death.to_bits() ^ crate::rng::mix64(self.a_mediator.to_bits())),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MediatorMode {
    /// Conditional mean plus Gaussian noise with the residual sd.
    #[default]
    Stochastic,
    /// Conditional mean only.
    Deterministic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineOptions {
    pub mediator_mode: MediatorMode,
    /// Reuse one normal and one uniform per (subject, visit) across regimes.
    pub common_random_numbers: bool,
    /// Position of a simulated death inside its interval, as a fraction of
    /// the interval length.
    pub death_time_fraction: f64,
    /// Simulated trajectories per subject.
    pub replicates: usize,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions {
            mediator_mode: MediatorMode::Stochastic,
            common_random_numbers: true,
            death_time_fraction: 0.5,
            replicates: 1,
        }
    }
}

/// Address of the random streams for one simulation draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimulationStreams {
    pub master_seed: u64,
    pub draw: u64,
}

impl SimulationStreams {
    /// Draw index used for the full-sample (non-bootstrap) estimate.
    pub const PLUG_IN_DRAW: u64 = u64::MAX;

    pub fn new(master_seed: u64, draw: u64) -> Self {
        SimulationStreams { master_seed, draw }
    }

    pub fn plug_in(master_seed: u64) -> Self {
        Self::new(master_seed, Self::PLUG_IN_DRAW)
    }

    pub(crate) fn key(&self) -> StreamKey {
        StreamKey::new(self.master_seed)
            .child(purpose::SIMULATION)
            .child(self.draw)
    }
}

/// Warnings when a contrast level lies outside the central 99% of the
/// observed exposure distribution.
pub fn positivity_warnings(cohort: &CohortDataset, contrast: &ExposureContrast) -> Vec<String> {
    let exposures = cohort.exposures();
    let (Ok(lo), Ok(hi)) = (quantile(&exposures, 0.005), quantile(&exposures, 0.995)) else {
        return Vec::new();
    };
    [("reference", contrast.a_ref), ("comparison", contrast.a_cmp)]
        .into_iter()
        .filter(|(_, a)| *a < lo || *a > hi)
        .map(|(name, a)| {
            format!(
                "positivity: {name} exposure level {a} lies outside the central 99% of observed exposure [{lo}, {hi}]"
            )
        })
        .collect()
}
