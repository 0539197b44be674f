use rayon::prelude::*;

use super::{check_budget, OracleError, StructuralDgp, SubjectDraws, Trajectory};
use crate::cohort::{CohortDataset, EventKind, MediatorValue, SubjectRecord};
use crate::rng::{purpose, StreamKey};

/// Redraws allowed for a single subject before giving up.
const MAX_ATTEMPTS: u64 = 1000;

/// Draw `n` subjects from the structural system. Event times are sampled by
/// inverting the piecewise-constant cumulative hazard; a death ends outcome
/// follow-up and truncates later mediators.
pub fn generate_cohort(dgp: &StructuralDgp, n: usize, seed: u64) -> Result<CohortDataset, OracleError> {
    dgp.validate()?;
    if n == 0 {
        return Err(OracleError::NoSubjects);
    }
    let root = StreamKey::new(seed).child(purpose::COHORT);
    let drawn: Vec<(Option<SubjectRecord>, usize)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let key = root.child(i as u64);
            for attempt in 0..MAX_ATTEMPTS {
                let d = SubjectDraws::draw(dgp, &mut key.child(attempt).rng());
                if let Some(record) = record(dgp, &d, i) {
                    return (Some(record), attempt as usize);
                }
            }
            (None, MAX_ATTEMPTS as usize)
        })
        .collect();

    let rejected: usize = drawn.iter().map(|(_, r)| r).sum();
    check_budget(rejected, n + rejected)?;
    let subjects = drawn
        .into_iter()
        .map(|(s, _)| s.ok_or(OracleError::HazardNegativityBudgetExceeded { rejected, attempted: n + rejected }))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CohortDataset::new(
        subjects,
        dgp.visit_times.clone(),
        dgp.horizon,
        dgp.covariate_names(),
    ))
}

fn record(dgp: &StructuralDgp, d: &SubjectDraws, index: usize) -> Option<SubjectRecord> {
    let a = d.exposure;
    let path = Trajectory::simulate(dgp, d, (a, a, a), true)?;
    let v = &dgp.visit_times;
    let k = dgp.n_visits();
    let end = path.time_at_risk(dgp.horizon);

    let (event_time, event) = match path.invert(v, end, d.outcome_exponential) {
        Some(t) if t < end => (t, EventKind::Outcome),
        _ => match path.death_time {
            Some(t) => (t, EventKind::CompetingDeath),
            None => (dgp.horizon, EventKind::Censored),
        },
    };

    let alive = path.mediator.len();
    let died = path.death_time.is_some();
    let mediator = (0..k)
        .map(|j| match path.mediator.get(j) {
            Some(&m) => MediatorValue::Observed(m),
            None => MediatorValue::DeathTruncated,
        })
        .collect();
    let death = (0..k).map(|j| died && j + 1 >= alive).collect();

    Some(SubjectRecord {
        id: format!("s{index}"),
        exposure: a,
        baseline: d.baseline.clone(),
        mediator,
        death,
        event_time,
        event,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::validate_cohort;
    use crate::oracle::{DeathEquation, MediatorEquation, Normal, OutcomeEquation};

    #[test]
    fn reproducible_and_valid() {
        let dgp = StructuralDgp::default();
        let a = generate_cohort(&dgp, 500, 42).unwrap();
        assert_eq!(a, generate_cohort(&dgp, 500, 42).unwrap());
        assert_ne!(a, generate_cohort(&dgp, 500, 43).unwrap());
        let a = validate_cohort(a).unwrap();
        let kinds = |e| a.subjects.iter().filter(|s| s.event == e).count();
        assert!(kinds(EventKind::Outcome) > 50);
        assert!(kinds(EventKind::CompetingDeath) > 20);
        assert!(kinds(EventKind::Censored) > 50);
    }

    #[test]
    fn negligible_death_rate_gives_no_deaths() {
        let mut dgp = StructuralDgp::default();
        for d in &mut dgp.death {
            d.intercept = -20.0 - 120.0 * d.mediator;
        }
        let c = generate_cohort(&dgp, 10_000, 1).unwrap();
        assert!(c.subjects.iter().all(|s| s.death.iter().all(|&d| !d)));
    }

    fn exponential(rate: f64) -> StructuralDgp {
        StructuralDgp {
            visit_times: vec![0.0, 5.0, 10.0],
            horizon: 10.0,
            exposure: Normal { mean: 0.0, sd: 1.0 },
            baseline: vec![],
            mediator: vec![
                MediatorEquation { intercept: 0.0, lag: 0.0, exposure: 0.0, baseline: vec![], noise_sd: 1.0 };
                2
            ],
            death: vec![DeathEquation { intercept: -50.0, mediator: 0.0, exposure: 0.0, baseline: vec![] }; 2],
            outcome: OutcomeEquation { baseline_rate: rate, exposure: 0.0, mediator: 0.0, baseline: vec![] },
        }
    }

    #[test]
    fn constant_hazard_gives_exponential_survival() {
        let rate = 0.1;
        let n = 20_000;
        let c = generate_cohort(&exponential(rate), n, 5).unwrap();
        for t in [1.0, 3.0, 7.0, 9.5] {
            let empirical = c.subjects.iter().filter(|s| s.event_time > t).count() as f64 / n as f64;
            let truth = (-rate * t).exp();
            let se = (truth * (1.0 - truth) / n as f64).sqrt();
            assert!((empirical - truth).abs() < 3.0 * se, "t={t}: {empirical} vs {truth}");
        }
    }

    #[test]
    fn exhausting_the_negative_hazard_budget() {
        let mut dgp = exponential(0.1);
        dgp.outcome.exposure = 1.0;
        let err = generate_cohort(&dgp, 200, 3).unwrap_err();
        assert!(matches!(err, OracleError::HazardNegativityBudgetExceeded { .. }));
        assert_eq!(generate_cohort(&exponential(0.1), 0, 3).unwrap_err(), OracleError::NoSubjects);
    }
}
