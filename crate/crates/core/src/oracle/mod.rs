//! Synthetic cohorts drawn from known structural equations, and the true
//! path-specific effects of those equations computed by brute-force Monte
//! Carlo. Nothing here calls into the estimation engine.

mod generate;
mod truth;

pub use generate::generate_cohort;
pub use truth::{true_conditional_effects, true_effects, TrueEffect, TrueEffects, TruePhi};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("invalid structural model: {0}")]
    InvalidDgp(String),
    #[error("at least one subject is required")]
    NoSubjects,
    #[error("negative outcome hazard in {rejected} of {attempted} draws exceeds the 0.1% budget")]
    HazardNegativityBudgetExceeded { rejected: usize, attempted: usize },
}

/// Largest tolerated share of subject draws rejected for a negative hazard.
pub const HAZARD_REJECTION_BUDGET: f64 = 0.001;

/// `M_k = intercept + lag·M_{k-1} + exposure·A + baselineᵀL + N(0, noise_sd²)`.
/// `lag` is ignored at the first visit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediatorEquation {
    pub intercept: f64,
    #[serde(default)]
    pub lag: f64,
    pub exposure: f64,
    #[serde(default)]
    pub baseline: Vec<f64>,
    pub noise_sd: f64,
}

/// `logit P(D_k = 1 | alive) = intercept + mediator·M_k + exposure·A + baselineᵀL`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeathEquation {
    pub intercept: f64,
    pub mediator: f64,
    pub exposure: f64,
    #[serde(default)]
    pub baseline: Vec<f64>,
}

/// `λ(t) = baseline_rate + exposure·A + mediator·M(t) + baselineᵀL`, with
/// `M(t)` the most recent mediator value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeEquation {
    pub baseline_rate: f64,
    pub exposure: f64,
    pub mediator: f64,
    #[serde(default)]
    pub baseline: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Normal {
    pub mean: f64,
    pub sd: f64,
}

/// Fully specified structural system: exposure `A` and baseline covariates
/// `L`, then per visit a Gaussian mediator and a logistic death indicator,
/// and an additive-hazards outcome. Follow-up ends administratively at the
/// horizon. A death is placed uniformly within its interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructuralDgp {
    pub visit_times: Vec<f64>,
    pub horizon: f64,
    pub exposure: Normal,
    #[serde(default)]
    pub baseline: Vec<Normal>,
    pub mediator: Vec<MediatorEquation>,
    pub death: Vec<DeathEquation>,
    pub outcome: OutcomeEquation,
}

impl Default for StructuralDgp {
    /// Three visits with every path active: exposure raises the mediator,
    /// mortality and the outcome hazard, and the mediator raises both
    /// mortality and the outcome hazard.
    fn default() -> Self {
        let l = |x: f64| vec![x];
        StructuralDgp {
            visit_times: vec![0.0, 4.0, 8.0, 13.0],
            horizon: 20.0,
            exposure: Normal { mean: 2.0, sd: 0.7 },
            baseline: vec![Normal { mean: 0.0, sd: 1.0 }],
            mediator: vec![
                MediatorEquation { intercept: 110.0, lag: 0.0, exposure: 4.0, baseline: l(2.0), noise_sd: 10.0 },
                MediatorEquation { intercept: 40.0, lag: 0.7, exposure: 2.0, baseline: l(1.5), noise_sd: 8.0 },
                MediatorEquation { intercept: 40.0, lag: 0.7, exposure: 2.0, baseline: l(1.5), noise_sd: 8.0 },
            ],
            death: (0..3)
                .map(|k| DeathEquation {
                    intercept: -5.6 + 0.3 * k as f64,
                    mediator: 0.02,
                    exposure: 0.4,
                    baseline: l(0.3),
                })
                .collect(),
            outcome: OutcomeEquation {
                baseline_rate: 0.002,
                exposure: 0.003,
                mediator: 0.0001,
                baseline: l(0.001),
            },
        }
    }
}

impl StructuralDgp {
    /// The default system with every exposure coefficient set to zero.
    pub fn null() -> Self {
        let mut dgp = Self::default();
        for m in &mut dgp.mediator {
            m.exposure = 0.0;
        }
        for d in &mut dgp.death {
            d.exposure = 0.0;
        }
        dgp.outcome.exposure = 0.0;
        dgp
    }

    /// High, exposure-driven mortality with a harmful direct effect and a
    /// mediator that drifts upwards across visits.
    pub fn attenuation() -> Self {
        let mut dgp = Self::default();
        for (k, m) in dgp.mediator.iter_mut().enumerate() {
            m.intercept += 5.0 * k as f64;
        }
        for (k, d) in dgp.death.iter_mut().enumerate() {
            d.intercept = -6.0 + 0.3 * k as f64;
            d.exposure = 1.2;
        }
        dgp.outcome.exposure = 0.006;
        dgp
    }

    pub fn n_visits(&self) -> usize {
        self.visit_times.len().saturating_sub(1)
    }

    pub fn n_covariates(&self) -> usize {
        self.baseline.len()
    }

    pub fn covariate_names(&self) -> Vec<String> {
        (1..=self.baseline.len()).map(|j| format!("l0_{j}")).collect()
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        let bad = |m: String| Err(OracleError::InvalidDgp(m));
        let v = &self.visit_times;
        let k = self.n_visits();
        let p = self.n_covariates();
        if k == 0 || v[0] != 0.0 || v.windows(2).any(|w| !(w[1] > w[0])) || v.iter().any(|t| !t.is_finite()) {
            return bad("visit_times must start at 0 and strictly increase".into());
        }
        if !(self.horizon >= v[k]) || !self.horizon.is_finite() {
            return bad(format!("horizon {} precedes the last visit {}", self.horizon, v[k]));
        }
        if self.mediator.len() != k || self.death.len() != k {
            return bad(format!(
                "{k} visits need {k} mediator and death equations, got {} and {}",
                self.mediator.len(),
                self.death.len()
            ));
        }
        let widths_ok = self.mediator.iter().all(|m| m.baseline.len() == p)
            && self.death.iter().all(|d| d.baseline.len() == p)
            && self.outcome.baseline.len() == p;
        if !widths_ok {
            return bad(format!("every equation needs {p} baseline coefficients"));
        }
        let sds_ok = std::iter::once(self.exposure.sd)
            .chain(self.baseline.iter().map(|b| b.sd))
            .chain(self.mediator.iter().map(|m| m.noise_sd))
            .all(|sd| sd >= 0.0 && sd.is_finite());
        if !sds_ok {
            return bad("standard deviations must be finite and nonnegative".into());
        }
        Ok(())
    }
}

/// Draw budget shared by cohort generation and the truth computation.
fn check_budget(rejected: usize, attempted: usize) -> Result<(), OracleError> {
    if rejected as f64 > HAZARD_REJECTION_BUDGET * attempted as f64 {
        Err(OracleError::HazardNegativityBudgetExceeded { rejected, attempted })
    } else {
        Ok(())
    }
}

/// Exogenous randomness for one subject. Shared across regimes in the truth
/// computation.
struct SubjectDraws {
    exposure: f64,
    baseline: Vec<f64>,
    mediator_noise: Vec<f64>,
    death_uniform: Vec<f64>,
    death_position: Vec<f64>,
    outcome_exponential: f64,
}

impl SubjectDraws {
    fn draw(dgp: &StructuralDgp, rng: &mut crate::rng::CounterRng) -> Self {
        use rand_distr::{Distribution, StandardNormal};
        let normal = |rng: &mut crate::rng::CounterRng| -> f64 { StandardNormal.sample(rng) };
        let exposure = dgp.exposure.mean + dgp.exposure.sd * normal(rng);
        let baseline = dgp.baseline.iter().map(|b| b.mean + b.sd * normal(rng)).collect();
        let k = dgp.n_visits();
        let mut mediator_noise = Vec::with_capacity(k);
        let mut death_uniform = Vec::with_capacity(k);
        let mut death_position = Vec::with_capacity(k);
        for _ in 0..k {
            mediator_noise.push(normal(rng));
            death_uniform.push(rng.open_uniform());
            death_position.push(rng.open_uniform());
        }
        let outcome_exponential = -rng.open_uniform().ln();
        SubjectDraws {
            exposure,
            baseline,
            mediator_noise,
            death_uniform,
            death_position,
            outcome_exponential,
        }
    }
}

/// Structural trajectory of one subject under exposure slots
/// `(a_outcome, a_death, a_mediator)`.
struct Trajectory {
    mediator: Vec<f64>,
    death_time: Option<f64>,
    /// Outcome hazard on each interval entered alive.
    hazard: Vec<f64>,
}

impl Trajectory {
    /// `None` when the outcome hazard is negative on an interval entered alive.
    fn simulate(
        dgp: &StructuralDgp,
        d: &SubjectDraws,
        (a_outcome, a_death, a_mediator): (f64, f64, f64),
        death_process: bool,
    ) -> Option<Self> {
        let v = &dgp.visit_times;
        let mut mediator = Vec::with_capacity(dgp.n_visits());
        let mut hazard = Vec::with_capacity(dgp.n_visits());
        let mut death_time = None;
        for (k, (me, de)) in dgp.mediator.iter().zip(&dgp.death).enumerate() {
            let lag = if k == 0 { 0.0 } else { me.lag * mediator[k - 1] };
            let m = me.intercept
                + lag
                + me.exposure * a_mediator
                + dot(&me.baseline, &d.baseline)
                + me.noise_sd * d.mediator_noise[k];
            mediator.push(m);
            let o = &dgp.outcome;
            let h = o.baseline_rate + o.exposure * a_outcome + o.mediator * m + dot(&o.baseline, &d.baseline);
            if h < 0.0 {
                return None;
            }
            hazard.push(h);
            if death_process {
                let p = logistic(de.intercept + de.mediator * m + de.exposure * a_death + dot(&de.baseline, &d.baseline));
                if d.death_uniform[k] < p {
                    death_time = Some(v[k] + d.death_position[k] * (v[k + 1] - v[k]));
                    break;
                }
            }
        }
        Some(Trajectory {
            mediator,
            death_time,
            hazard,
        })
    }

    /// Pieces `(start, end, hazard)` of the outcome hazard up to `t`.
    fn segments<'a>(&'a self, v: &'a [f64], t: f64) -> impl Iterator<Item = (f64, f64, f64)> + 'a {
        let last = v.len() - 2;
        self.hazard.iter().enumerate().filter_map(move |(k, &h)| {
            let start = v[k];
            let end = if k == last { t } else { v[k + 1].min(t) };
            (end > start).then_some((start, end, h))
        })
    }

    /// End of outcome follow-up: death or the horizon.
    fn time_at_risk(&self, horizon: f64) -> f64 {
        self.death_time.map_or(horizon, |t| t.min(horizon))
    }

    fn cumulative_hazard(&self, v: &[f64], t: f64) -> f64 {
        self.segments(v, t).map(|(a, b, h)| h * (b - a)).sum()
    }

    /// Time at which the cumulative hazard reaches `e`, if before `t`.
    fn invert(&self, v: &[f64], t: f64, e: f64) -> Option<f64> {
        let mut acc = 0.0;
        for (a, b, h) in self.segments(v, t) {
            let inc = h * (b - a);
            if h > 0.0 && acc + inc >= e {
                return Some(a + (e - acc) / h);
            }
            acc += inc;
        }
        None
    }
}

fn logistic(eta: f64) -> f64 {
    1.0 / (1.0 + (-eta).exp())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        StructuralDgp::default().validate().unwrap();
        StructuralDgp::null().validate().unwrap();
        StructuralDgp::attenuation().validate().unwrap();
    }

    #[test]
    fn rejects_malformed_systems() {
        let mut d = StructuralDgp::default();
        d.death.pop();
        assert!(matches!(d.validate(), Err(OracleError::InvalidDgp(_))));
        let mut d = StructuralDgp::default();
        d.horizon = 10.0;
        assert!(d.validate().is_err());
        let mut d = StructuralDgp::default();
        d.mediator[1].noise_sd = -1.0;
        assert!(d.validate().is_err());
        let mut d = StructuralDgp::default();
        d.outcome.baseline.clear();
        assert!(d.validate().is_err());
    }

    #[test]
    fn json_round_trip() {
        let d = StructuralDgp::default();
        let s = serde_json::to_string(&d).unwrap();
        assert_eq!(serde_json::from_str::<StructuralDgp>(&s).unwrap(), d);
    }
}
