use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use super::{
    EngineError, EngineOptions, FittedModelSet, MediatorMode, RegimeTriple, SimulationStreams,
    PERSON_YEARS_SCALE,
};
use crate::cohort::{CohortDataset, SubjectRecord};
use crate::estimators::{predict_survival, CovariatePath};

/// One simulated trajectory under a regime.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectTrajectory {
    /// Simulated mediator for each interval entered alive.
    pub mediator: Vec<f64>,
    /// 0-based interval of simulated death, if any.
    pub death_interval: Option<usize>,
    /// Time at risk for the outcome: `min(death time, horizon)`.
    pub time_at_risk: f64,
    pub cumulative_hazard: f64,
    /// `exp(-cumulative_hazard)` clamped to `[0, 1]`.
    pub outcome_free: f64,
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CounterfactualWorld {
    pub regime: RegimeTriple,
    /// Subject-major, `replicates` entries per subject.
    pub trajectories: Vec<SubjectTrajectory>,
}

impl CounterfactualWorld {
    pub fn clamp_count(&self) -> usize {
        self.trajectories.iter().filter(|t| t.clamped).count()
    }
}

/// Population summaries of a simulated world.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhiValue {
    /// Cumulative outcome hazard over person-time at risk, per 100,000
    /// person-years.
    pub rate_per_100k: f64,
    /// Mean probability of remaining outcome-free through the time at risk.
    pub outcome_free: f64,
    pub mean_time_at_risk: f64,
    pub clamped: usize,
}

pub fn phi(world: &CounterfactualWorld) -> PhiValue {
    let n = world.trajectories.len() as f64;
    let mut hazard = 0.0;
    let mut time = 0.0;
    let mut free = 0.0;
    for t in &world.trajectories {
        hazard += t.cumulative_hazard;
        time += t.time_at_risk;
        free += t.outcome_free;
    }
    PhiValue {
        rate_per_100k: if time > 0.0 { hazard / time * PERSON_YEARS_SCALE } else { 0.0 },
        outcome_free: free / n,
        mean_time_at_risk: time / n,
        clamped: world.clamp_count(),
    }
}

/// Simulate every subject's mediator and survival path under `regime`,
/// holding baseline covariates at their observed values.
pub fn simulate_world(
    models: &FittedModelSet,
    cohort: &CohortDataset,
    regime: RegimeTriple,
    options: &EngineOptions,
    streams: SimulationStreams,
) -> Result<CounterfactualWorld, EngineError> {
    simulate(models, cohort, regime, options, streams, true)
}

pub(crate) fn simulate(
    models: &FittedModelSet,
    cohort: &CohortDataset,
    regime: RegimeTriple,
    options: &EngineOptions,
    streams: SimulationStreams,
    death_process: bool,
) -> Result<CounterfactualWorld, EngineError> {
    if cohort.subjects.is_empty() {
        return Err(EngineError::EmptyCohort);
    }
    let replicates = options.replicates.max(1);
    let base = streams.key();
    let trajectories = (0..cohort.subjects.len() * replicates)
        .into_par_iter()
        .map(|slot| {
            let (i, r) = (slot / replicates, slot % replicates);
            let mut key = base.child(i as u64).child(r as u64);
            if !options.common_random_numbers {
                key = key.child(regime.stream_id());
            }
            let mut rng = key.rng();
            simulate_subject(models, cohort, &cohort.subjects[i], regime, options, death_process, &mut rng)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CounterfactualWorld {
        regime,
        trajectories,
    })
}

fn simulate_subject(
    models: &FittedModelSet,
    cohort: &CohortDataset,
    subject: &SubjectRecord,
    regime: RegimeTriple,
    options: &EngineOptions,
    death_process: bool,
    rng: &mut crate::rng::CounterRng,
) -> Result<SubjectTrajectory, EngineError> {
    let v = &cohort.visit_times;
    let n_visits = models.n_visits();
    let mut mediator = Vec::with_capacity(n_visits);
    let mut death_interval = None;
    let mut row = Vec::with_capacity(3 + subject.baseline.len());

    for k in 0..n_visits {
        // Both draws are consumed at every visit so that the numbers used at
        // visit k do not depend on the regime's earlier history.
        let z: f64 = StandardNormal.sample(rng);
        let u = rng.open_uniform();

        let fit = &models.mediator_models[k];
        row.clear();
        row.push(1.0);
        if k > 0 {
            row.push(mediator[k - 1]);
        }
        row.push(regime.a_mediator);
        row.extend(&subject.baseline);
        let mut m = fit.predict(&row);
        if options.mediator_mode == MediatorMode::Stochastic {
            m += fit.residual_sd * z;
        }
        mediator.push(m);

        if death_process {
            row.clear();
            row.extend([1.0, m, regime.a_death]);
            row.extend(&subject.baseline);
            if u < models.death_models[k].probability(&row) {
                death_interval = Some(k);
                break;
            }
        }
    }

    let time_at_risk = match death_interval {
        Some(k) => (v[k] + options.death_time_fraction * (v[k + 1] - v[k])).min(cohort.horizon),
        None => cohort.horizon,
    };
    let path = CovariatePath {
        knots: v[..mediator.len()].to_vec(),
        values: mediator
            .iter()
            .map(|&m| {
                let mut x = vec![regime.a_outcome, m];
                x.extend(&subject.baseline);
                x
            })
            .collect(),
    };
    let prediction = predict_survival(&models.outcome_model, &path, time_at_risk)?;
    Ok(SubjectTrajectory {
        mediator,
        death_interval,
        time_at_risk,
        cumulative_hazard: prediction.cumulative_hazard,
        outcome_free: prediction.probability,
        clamped: prediction.clamped,
    })
}
