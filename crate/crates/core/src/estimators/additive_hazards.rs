//! Lin-Ying additive hazards model, `λ(t | x) = λ₀(t) + βᵀx(t)`.
//!
//! With at-risk indicators `Rᵢ(t)`, at-risk mean `X̄(t)` and outcome
//! counting processes `Nᵢ`, the estimator solves
//!
//! ```text
//! [ Σᵢ ∫ (Xᵢ − X̄)^⊗2 Rᵢ dt ] β = Σᵢ ∫ (Xᵢ − X̄) dNᵢ
//! ```
//!
//! Covariates are constant on counting-process rows, so both integrals are
//! finite sums: the `dt` integral over segments between consecutive row
//! boundaries, the `dN` integral over event times. The baseline is the
//! Breslow-type `Λ̂₀(t) = Σ_{s ≤ t} dN̄(s) / R̄(s) − β̂ᵀ ∫₀ᵗ X̄(s) ds`, a
//! step function plus a piecewise-linear drift.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::EstimationError;
use crate::cohort::{CountingProcessTable, CovariateColumn};

/// `Λ̂₀` stored as knots. On `[times[j], times[j+1])` the value is
/// `values[j] + slopes[j] * (t - times[j])`; the final slope extends past
/// the last knot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineCumulativeHazard {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub slopes: Vec<f64>,
}

impl BaselineCumulativeHazard {
    /// Linear baseline `rate * t`.
    pub fn linear(rate: f64) -> Self {
        BaselineCumulativeHazard {
            times: vec![0.0],
            values: vec![0.0],
            slopes: vec![rate],
        }
    }

    pub fn at(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let j = self.times.partition_point(|&s| s <= t) - 1;
        self.values[j] + self.slopes[j] * (t - self.times[j])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdditiveHazardsFit {
    /// `β̂`, in events per person-year per covariate unit.
    pub coefficients: Vec<f64>,
    pub baseline_cumhaz: BaselineCumulativeHazard,
    pub covariate_names: Vec<String>,
    pub n_events: usize,
}

/// Piecewise-constant covariate path: `values[j]` holds on
/// `[knots[j], knots[j+1])`, the last value holds onwards. `knots[0]` is 0.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariatePath {
    pub knots: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl CovariatePath {
    pub fn constant(x: Vec<f64>) -> Self {
        CovariatePath {
            knots: vec![0.0],
            values: vec![x],
        }
    }

    /// `∫₀ᵗ x(s) ds`, componentwise.
    pub fn integral(&self, t: f64) -> Vec<f64> {
        let p = self.values.first().map_or(0, Vec::len);
        let mut acc = vec![0.0; p];
        for (j, x) in self.values.iter().enumerate() {
            let lo = self.knots[j];
            if lo >= t {
                break;
            }
            let hi = self.knots.get(j + 1).copied().unwrap_or(f64::INFINITY).min(t);
            let width = hi - lo;
            for (a, xi) in acc.iter_mut().zip(x) {
                *a += xi * width;
            }
        }
        acc
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurvivalPrediction {
    /// `exp(-Λ)` clamped to `[0, 1]`.
    pub probability: f64,
    pub cumulative_hazard: f64,
    pub clamped: bool,
}

struct SweepRow {
    start: f64,
    stop: f64,
    event: bool,
    x: Vec<f64>,
}

/// One boundary of the risk-set sweep.
struct Knot {
    time: f64,
    /// `dN̄ / R̄` at this time.
    jump: f64,
    /// At-risk covariate mean (uncentred) on the following segment.
    segment_mean: Option<Vec<f64>>,
}

struct LinYingSweep {
    information: DMatrix<f64>,
    score: DVector<f64>,
    knots: Vec<Knot>,
    n_events: usize,
}

fn sweep(table: &CountingProcessTable, columns: &[CovariateColumn]) -> LinYingSweep {
    let p = columns.len();
    let mut rows: Vec<SweepRow> = table
        .rows
        .iter()
        .map(|r| SweepRow {
            start: r.t_start,
            stop: r.t_stop,
            event: r.outcome_event,
            x: columns.iter().map(|&c| r.covariate(c)).collect(),
        })
        .collect();

    // Centring does not change X − X̄ but keeps the running second moments
    // well conditioned.
    let mut centre = vec![0.0; p];
    if !rows.is_empty() {
        for r in &rows {
            for (c, x) in centre.iter_mut().zip(&r.x) {
                *c += x;
            }
        }
        centre.iter_mut().for_each(|c| *c /= rows.len() as f64);
        for r in &mut rows {
            for (x, c) in r.x.iter_mut().zip(&centre) {
                *x -= c;
            }
        }
    }

    let mut times: Vec<f64> = rows.iter().flat_map(|r| [r.start, r.stop]).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();

    let mut by_start: Vec<usize> = (0..rows.len()).collect();
    by_start.sort_by(|&a, &b| rows[a].start.total_cmp(&rows[b].start));
    let mut by_stop: Vec<usize> = (0..rows.len()).collect();
    by_stop.sort_by(|&a, &b| rows[a].stop.total_cmp(&rows[b].stop));

    let mut information = DMatrix::zeros(p, p);
    let mut score = DVector::zeros(p);
    let mut s0 = 0usize;
    let mut s1 = vec![0.0; p];
    let mut s2 = DMatrix::<f64>::zeros(p, p);
    let (mut next_start, mut next_stop) = (0usize, 0usize);
    let mut knots = Vec::with_capacity(times.len());
    let mut n_events = 0;

    for (j, &t) in times.iter().enumerate() {
        // Events at t see the risk set of the segment ending at t.
        let mut jump = 0.0;
        let mut k = next_stop;
        while k < by_stop.len() && rows[by_stop[k]].stop == t {
            let r = &rows[by_stop[k]];
            if r.event && s0 > 0 {
                for (a, (x, m)) in score.iter_mut().zip(r.x.iter().zip(&s1)) {
                    *a += x - m / s0 as f64;
                }
                jump += 1.0 / s0 as f64;
                n_events += 1;
            }
            k += 1;
        }
        while next_stop < by_stop.len() && rows[by_stop[next_stop]].stop == t {
            let r = &rows[by_stop[next_stop]];
            s0 -= 1;
            for a in 0..p {
                s1[a] -= r.x[a];
                for b in 0..p {
                    s2[(a, b)] -= r.x[a] * r.x[b];
                }
            }
            next_stop += 1;
        }
        while next_start < by_start.len() && rows[by_start[next_start]].start == t {
            let r = &rows[by_start[next_start]];
            s0 += 1;
            for a in 0..p {
                s1[a] += r.x[a];
                for b in 0..p {
                    s2[(a, b)] += r.x[a] * r.x[b];
                }
            }
            next_start += 1;
        }

        let segment_mean = if s0 > 0 && j + 1 < times.len() {
            let width = times[j + 1] - t;
            let n = s0 as f64;
            for a in 0..p {
                for b in 0..p {
                    information[(a, b)] += (s2[(a, b)] - s1[a] * s1[b] / n) * width;
                }
            }
            Some(s1.iter().zip(&centre).map(|(s, c)| s / n + c).collect())
        } else {
            None
        };
        knots.push(Knot {
            time: t,
            jump,
            segment_mean,
        });
    }

    LinYingSweep {
        information,
        score,
        knots,
        n_events,
    }
}

/// The Lin-Ying estimating equation as `(A, b)` with `A β = b`.
pub fn lin_ying_system(
    table: &CountingProcessTable,
    columns: &[CovariateColumn],
) -> (DMatrix<f64>, DVector<f64>) {
    let s = sweep(table, columns);
    (s.information, s.score)
}

pub fn fit_additive_hazards(
    table: &CountingProcessTable,
    columns: &[CovariateColumn],
) -> Result<AdditiveHazardsFit, EstimationError> {
    if table.n_events() == 0 {
        return Err(EstimationError::NoEvents);
    }
    let s = sweep(table, columns);
    if s.n_events == 0 {
        return Err(EstimationError::NoEvents);
    }
    let p = columns.len();

    let beta = if p == 0 {
        DVector::zeros(0)
    } else {
        let sv = s.information.singular_values();
        if !(sv.max() > 0.0) || sv.min() / sv.max() < super::RANK_TOLERANCE {
            return Err(EstimationError::SingularInformation);
        }
        s.information
            .clone()
            .cholesky()
            .map(|c| c.solve(&s.score))
            .or_else(|| s.information.clone().lu().solve(&s.score))
            .ok_or(EstimationError::SingularInformation)?
    };

    let mut times = Vec::with_capacity(s.knots.len() + 1);
    let mut values = Vec::with_capacity(s.knots.len() + 1);
    let mut slopes = Vec::with_capacity(s.knots.len() + 1);
    let drift = |mean: &Vec<f64>| -> f64 { -beta.iter().zip(mean).map(|(b, x)| b * x).sum::<f64>() };

    let mut value = 0.0;
    let mut last_slope = 0.0;
    if s.knots.first().is_none_or(|k| k.time > 0.0) {
        times.push(0.0);
        values.push(0.0);
        slopes.push(0.0);
    }
    for (j, knot) in s.knots.iter().enumerate() {
        if let Some(prev) = times.last() {
            let width = knot.time - prev;
            value += slopes.last().copied().unwrap_or(0.0) * width;
        }
        value += knot.jump;
        let slope = match &knot.segment_mean {
            Some(mean) => {
                last_slope = drift(mean);
                last_slope
            }
            None if j + 1 == s.knots.len() => last_slope,
            None => 0.0,
        };
        times.push(knot.time);
        values.push(value);
        slopes.push(slope);
    }

    Ok(AdditiveHazardsFit {
        coefficients: beta.iter().copied().collect(),
        baseline_cumhaz: BaselineCumulativeHazard {
            times,
            values,
            slopes,
        },
        covariate_names: columns.iter().map(|&c| table.column_name(c)).collect(),
        n_events: s.n_events,
    })
}

/// `exp(−Λ̂₀(h) − β̂ᵀ ∫₀ʰ x(s) ds)`, clamped to `[0, 1]`.
pub fn predict_survival(
    fit: &AdditiveHazardsFit,
    path: &CovariatePath,
    horizon: f64,
) -> Result<SurvivalPrediction, EstimationError> {
    if horizon < 0.0 || horizon.is_nan() {
        return Err(EstimationError::HorizonBeforeZero(horizon));
    }
    if let Some(x) = path.values.iter().find(|x| x.len() != fit.coefficients.len()) {
        return Err(EstimationError::DimensionMismatch {
            expected: fit.coefficients.len(),
            got: x.len(),
        });
    }
    if horizon == 0.0 {
        return Ok(SurvivalPrediction {
            probability: 1.0,
            cumulative_hazard: 0.0,
            clamped: false,
        });
    }
    let integral = path.integral(horizon);
    let lin: f64 = fit.coefficients.iter().zip(&integral).map(|(b, x)| b * x).sum();
    let cumulative_hazard = fit.baseline_cumhaz.at(horizon) + lin;
    let raw = (-cumulative_hazard).exp();
    let probability = raw.clamp(0.0, 1.0);
    Ok(SurvivalPrediction {
        probability,
        cumulative_hazard,
        clamped: probability != raw,
    })
}

/// Covariate-attributable rate `β̂ᵀx` (baseline excluded).
pub fn predict_hazard_rate(fit: &AdditiveHazardsFit, x: &[f64]) -> Result<f64, EstimationError> {
    if x.len() != fit.coefficients.len() {
        return Err(EstimationError::DimensionMismatch {
            expected: fit.coefficients.len(),
            got: x.len(),
        });
    }
    Ok(fit.coefficients.iter().zip(x).map(|(b, v)| b * v).sum())
}
