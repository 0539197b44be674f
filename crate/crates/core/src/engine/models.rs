use std::fmt;

use nalgebra::DMatrix;
use serde::Serialize;

use super::EngineError;
use crate::cohort::{
    to_counting_process, CohortDataset, CovariateColumn, EventKind, SubjectRecord,
};
use crate::estimators::{
    fit_additive_hazards, fit_linear, fit_logistic, AdditiveHazardsFit, EstimationError,
    LinearModelFit, LogisticModelFit, LogisticOptions,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Mediator,
    Death,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Mediator => "mediator",
            ModelKind::Death => "death",
        })
    }
}

/// Pooled model for `P(D_k = 1 | M_k, A, L)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DeathModel {
    Logistic(LogisticModelFit),
    /// Every at-risk subject had the same death status at this visit.
    Constant { probability: f64 },
}

impl DeathModel {
    pub fn probability(&self, row: &[f64]) -> f64 {
        match self {
            DeathModel::Logistic(fit) => fit.probability(row),
            DeathModel::Constant { probability } => *probability,
        }
    }
}

/// Mediator, death and outcome models fitted on one cohort.
///
/// Design rows are `[1, M_{k-1}, A, L...]` for mediator visit `k > 1`
/// (`[1, A, L...]` at `k = 1`), `[1, M_k, A, L...]` for death visit `k`,
/// and `[A, M(t), L...]` for the outcome model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FittedModelSet {
    pub mediator_models: Vec<LinearModelFit>,
    pub death_models: Vec<DeathModel>,
    pub outcome_model: AdditiveHazardsFit,
    pub diagnostics: Vec<String>,
}

impl FittedModelSet {
    pub fn n_visits(&self) -> usize {
        self.mediator_models.len()
    }
}

/// Mediator-model risk set for 0-based interval `k`: alive and outcome-free
/// at its opening visit.
fn in_mediator_risk_set(s: &SubjectRecord, k: usize, visit_times: &[f64]) -> bool {
    s.alive_after(k) && s.event_time > visit_times[k]
}

/// Death-model risk set for 0-based interval `k`: alive at its opening visit
/// with vital status still observed. An outcome event does not end
/// ascertainment of death; censoring does.
fn in_death_risk_set(s: &SubjectRecord, k: usize, visit_times: &[f64]) -> bool {
    s.alive_after(k) && (s.event == EventKind::Outcome || s.event_time > visit_times[k])
}

fn mediator_names(k: usize, covariates: &[String]) -> Vec<String> {
    let mut names = vec!["intercept".to_string()];
    if k > 0 {
        names.push(format!("M{k}"));
    }
    names.push("A".to_string());
    names.extend(covariates.iter().cloned());
    names
}

fn death_names(k: usize, covariates: &[String]) -> Vec<String> {
    let mut names = vec!["intercept".to_string(), format!("M{}", k + 1), "A".to_string()];
    names.extend(covariates.iter().cloned());
    names
}

pub fn fit_model_set(cohort: &CohortDataset) -> Result<FittedModelSet, EngineError> {
    if cohort.subjects.is_empty() {
        return Err(EngineError::EmptyCohort);
    }
    let n_visits = cohort.n_visits();
    let p = cohort.n_covariates();
    let mut diagnostics = Vec::new();

    let mut mediator_models = Vec::with_capacity(n_visits);
    for k in 0..n_visits {
        let width = 2 + p + usize::from(k > 0);
        let mut data = Vec::new();
        let mut response = Vec::new();
        for s in cohort.subjects.iter().filter(|s| in_mediator_risk_set(s, k, &cohort.visit_times)) {
            let y = s.mediator[k].value().ok_or(EngineError::Cohort(
                crate::cohort::CohortError::MediatorUnavailable {
                    id: s.id.clone(),
                    interval: k + 1,
                },
            ))?;
            data.push(1.0);
            if k > 0 {
                data.push(s.mediator[k - 1].value().unwrap_or(f64::NAN));
            }
            data.push(s.exposure);
            data.extend(&s.baseline);
            response.push(y);
        }
        let design = DMatrix::from_row_slice(response.len(), width, &data);
        let fit = fit_linear(&design, &response).map_err(|source| EngineError::Model {
            kind: ModelKind::Mediator,
            visit: k + 1,
            source,
        })?;
        mediator_models.push(fit.with_names(mediator_names(k, &cohort.covariate_names)));
    }

    let mut death_models = Vec::with_capacity(n_visits);
    for k in 0..n_visits {
        let width = 3 + p;
        let mut data = Vec::new();
        let mut response = Vec::new();
        for s in cohort.subjects.iter().filter(|s| in_death_risk_set(s, k, &cohort.visit_times)) {
            data.push(1.0);
            data.push(s.mediator[k].value().unwrap_or(f64::NAN));
            data.push(s.exposure);
            data.extend(&s.baseline);
            response.push(if s.death[k] { 1.0 } else { 0.0 });
        }
        let design = DMatrix::from_row_slice(response.len(), width, &data);
        let model = match fit_logistic(&design, &response, LogisticOptions::default()) {
            Ok(fit) => DeathModel::Logistic(fit.with_names(death_names(k, &cohort.covariate_names))),
            Err(EstimationError::SingleClassResponse) => {
                let probability = response.first().copied().unwrap_or(0.0);
                diagnostics.push(format!(
                    "death model for visit {}: all {} at-risk subjects share one death status; using constant probability {probability}",
                    k + 1,
                    response.len()
                ));
                DeathModel::Constant { probability }
            }
            Err(source) => {
                return Err(EngineError::Model {
                    kind: ModelKind::Death,
                    visit: k + 1,
                    source,
                })
            }
        };
        death_models.push(model);
    }

    let table = to_counting_process(cohort)?;
    let mut columns = vec![CovariateColumn::Exposure, CovariateColumn::Mediator];
    columns.extend((0..p).map(CovariateColumn::Baseline));
    let outcome_model = fit_additive_hazards(&table, &columns).map_err(EngineError::Outcome)?;

    Ok(FittedModelSet {
        mediator_models,
        death_models,
        outcome_model,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::MediatorValue;
    use crate::rng::StreamKey;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    /// Two-visit cohort with no deaths at visit 1.
    fn synthetic(n: usize, seed: u64, collinear: bool) -> CohortDataset {
        let mut rng = StreamKey::new(seed).rng();
        let visit_times = vec![0.0, 5.0, 10.0];
        let subjects = (0..n)
            .map(|i| {
                let a: f64 = 2.0 + <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng);
                let l: f64 = StandardNormal.sample(&mut rng);
                let e1: f64 = StandardNormal.sample(&mut rng);
                let e2: f64 = StandardNormal.sample(&mut rng);
                let m1 = if collinear { 2.0 * a } else { 10.0 + a + l + e1 };
                let m2 = 5.0 + 0.5 * m1 + a + e2;
                let dies = rng.random::<f64>() < 0.2;
                let t: f64 = rng.random_range(0.5f64..12.0);
                let (mediator, death, event_time, event) = if dies {
                    (
                        vec![MediatorValue::Observed(m1), MediatorValue::Observed(m2)],
                        vec![false, true],
                        t.min(7.5),
                        if t < 7.5 { EventKind::Outcome } else { EventKind::CompetingDeath },
                    )
                } else {
                    (
                        vec![MediatorValue::Observed(m1), MediatorValue::Observed(m2)],
                        vec![false, false],
                        t.min(10.0),
                        if t < 10.0 { EventKind::Outcome } else { EventKind::Censored },
                    )
                };
                SubjectRecord {
                    id: i.to_string(),
                    exposure: a,
                    baseline: vec![l],
                    mediator,
                    death,
                    event_time,
                    event,
                }
            })
            .collect();
        CohortDataset::new(subjects, visit_times, 10.0, vec!["L".into()])
    }

    #[test]
    fn fits_and_downgrades_single_class_death() {
        let set = fit_model_set(&synthetic(300, 1, false)).unwrap();
        assert_eq!(set.n_visits(), 2);
        assert_eq!(set.death_models[0], DeathModel::Constant { probability: 0.0 });
        assert!(matches!(set.death_models[1], DeathModel::Logistic(_)));
        assert_eq!(set.diagnostics.len(), 1);
        let m2 = &set.mediator_models[1];
        assert_eq!(m2.design_column_names, ["intercept", "M1", "A", "L"]);
        assert!((m2.coefficients[1] - 0.5).abs() < 0.1);
        assert_eq!(set.outcome_model.covariate_names, ["exposure", "mediator", "L"]);
    }

    #[test]
    fn collinear_mediator_reported_with_model_and_visit() {
        let err = fit_model_set(&synthetic(200, 2, true)).unwrap_err();
        match err {
            EngineError::Model { kind, visit, source } => {
                assert_eq!(kind, ModelKind::Mediator);
                assert_eq!(visit, 2);
                assert!(matches!(source, EstimationError::RankDeficientDesign { .. }));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
