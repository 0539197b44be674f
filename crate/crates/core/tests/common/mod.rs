//! Helpers shared by the integration tests.
#![allow(dead_code)]

use gformula::cohort::CohortDataset;
use gformula::engine::{
    simulate_world, DeathModel, EngineOptions, FittedModelSet, RegimeTriple, SimulationStreams,
    PERSON_YEARS_SCALE,
};
use gformula::estimators::{
    AdditiveHazardsFit, BaselineCumulativeHazard, LinearModelFit, LogisticModelFit,
};
use gformula::oracle::StructuralDgp;

/// Engine models carrying the structural coefficients of `dgp`.
pub fn true_models(dgp: &StructuralDgp) -> FittedModelSet {
    let mediator_models = dgp
        .mediator
        .iter()
        .enumerate()
        .map(|(k, eq)| {
            let mut c = vec![eq.intercept];
            if k > 0 {
                c.push(eq.lag);
            }
            c.push(eq.exposure);
            c.extend(&eq.baseline);
            LinearModelFit { coefficients: c, residual_sd: eq.noise_sd, design_column_names: vec![] }
        })
        .collect();
    let death_models = dgp
        .death
        .iter()
        .map(|eq| {
            let mut c = vec![eq.intercept, eq.mediator, eq.exposure];
            c.extend(&eq.baseline);
            DeathModel::Logistic(LogisticModelFit {
                coefficients: c,
                converged: true,
                iterations: 0,
                log_likelihood: 0.0,
                design_column_names: vec![],
            })
        })
        .collect();
    let mut beta = vec![dgp.outcome.exposure, dgp.outcome.mediator];
    beta.extend(&dgp.outcome.baseline);
    FittedModelSet {
        mediator_models,
        death_models,
        outcome_model: AdditiveHazardsFit {
            coefficients: beta,
            baseline_cumhaz: BaselineCumulativeHazard::linear(dgp.outcome.baseline_rate),
            covariate_names: vec![],
            n_events: 0,
        },
        diagnostics: vec![],
    }
}

/// Index of the exposure coefficient in mediator model `k`.
pub fn mediator_exposure_index(k: usize) -> usize {
    if k == 0 { 1 } else { 2 }
}

pub fn zero_mediator_exposure(models: &mut FittedModelSet) {
    for (k, m) in models.mediator_models.iter_mut().enumerate() {
        m.coefficients[mediator_exposure_index(k)] = 0.0;
    }
}

pub fn zero_death_exposure(models: &mut FittedModelSet) {
    for d in &mut models.death_models {
        if let DeathModel::Logistic(fit) = d {
            fit.coefficients[2] = 0.0;
        }
    }
}

pub fn zero_outcome_exposure(models: &mut FittedModelSet) {
    models.outcome_model.coefficients[0] = 0.0;
}

/// Gaussian elimination with partial pivoting on a small dense system.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Per-subject contributions to a simulated world.
pub struct WorldSample {
    pub hazard: Vec<f64>,
    pub time: Vec<f64>,
    pub survival: Vec<f64>,
}

impl WorldSample {
    pub fn rate(&self) -> f64 {
        self.hazard.iter().sum::<f64>() / self.time.iter().sum::<f64>()
    }

    pub fn mean_time(&self) -> f64 {
        self.time.iter().sum::<f64>() / self.time.len() as f64
    }
}

pub fn sample_world(
    models: &FittedModelSet,
    cohort: &CohortDataset,
    regime: RegimeTriple,
    options: &EngineOptions,
    seed: u64,
) -> WorldSample {
    let world = simulate_world(models, cohort, regime, options, SimulationStreams::new(seed, 0)).unwrap();
    WorldSample {
        hazard: world.trajectories.iter().map(|t| t.cumulative_hazard).collect(),
        time: world.trajectories.iter().map(|t| t.time_at_risk).collect(),
        survival: world.trajectories.iter().map(|t| t.outcome_free).collect(),
    }
}

fn sd(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Contrast `b − a` on both scales with delta-method standard errors for
/// paired worlds: `(rate, rate_se, survival_pct, survival_se)`.
pub fn paired_contrast(a: &WorldSample, b: &WorldSample) -> (f64, f64, f64, f64) {
    let n = a.hazard.len() as f64;
    let (ra, rb) = (a.rate(), b.rate());
    let (ta, tb) = (a.mean_time(), b.mean_time());
    let influence: Vec<f64> = (0..a.hazard.len())
        .map(|i| (b.hazard[i] - rb * b.time[i]) / tb - (a.hazard[i] - ra * a.time[i]) / ta)
        .collect();
    let ds: Vec<f64> = a.survival.iter().zip(&b.survival).map(|(x, y)| y - x).collect();
    let sdiff = ds.iter().sum::<f64>() / n;
    (
        (rb - ra) * PERSON_YEARS_SCALE,
        sd(&influence) / n.sqrt() * PERSON_YEARS_SCALE,
        sdiff * 100.0,
        sd(&ds) / n.sqrt() * 100.0,
    )
}
