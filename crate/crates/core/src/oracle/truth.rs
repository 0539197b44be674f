use rayon::prelude::*;
use serde::Serialize;

use super::{check_budget, OracleError, StructuralDgp, SubjectDraws, Trajectory};
use crate::engine::{Effect, ExposureContrast};
use crate::rng::{purpose, StreamKey};

const CHUNK: usize = 4096;
const MAX_ATTEMPTS: u64 = 1000;
const PER_100K: f64 = 1e5;

/// `(a_Y, a_D, a_M)` with `true` meaning the comparison level.
type Slots = (bool, bool, bool);

const REGIMES: [(&str, Slots); 5] = [
    ("a,a,a", (false, false, false)),
    ("a*,a,a", (true, false, false)),
    ("a*,a*,a", (true, true, false)),
    ("a*,a*,a*", (true, true, true)),
    ("a*,a,a*", (true, false, true)),
];

/// Effects as (comparison regime, reference regime) positions in `REGIMES`.
const CONTRASTS: [(Effect, usize, usize); 5] = [
    (Effect::Direct, 1, 0),
    (Effect::IndirectMediator, 3, 2),
    (Effect::IndirectDeath, 2, 1),
    (Effect::Total, 3, 0),
    (Effect::DirectPlusMediator, 4, 0),
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruePhi {
    pub label: String,
    pub rate_per_100k: f64,
    pub outcome_free: f64,
    pub mean_time_at_risk: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrueEffect {
    pub effect: Effect,
    pub hazard_diff: f64,
    /// Monte Carlo standard error of `hazard_diff` (delta method).
    pub hazard_se: f64,
    /// Percentage points.
    pub surv_prob_diff: f64,
    pub surv_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrueEffects {
    pub death_process: bool,
    pub contrast: ExposureContrast,
    pub n_mc: usize,
    pub seed: u64,
    /// Draws discarded for a negative outcome hazard.
    pub rejected: usize,
    pub effects: Vec<TrueEffect>,
    pub phi: Vec<TruePhi>,
}

impl TrueEffects {
    pub fn get(&self, effect: Effect) -> Option<&TrueEffect> {
        self.effects.iter().find(|e| e.effect == effect)
    }
}

/// Per-subject `(Λ, τ, S)` under each regime.
type Outcome = [(f64, f64, f64); 5];

/// True effects with the death process active, by Monte Carlo over `n_mc`
/// subjects sharing their random draws across all five regimes.
pub fn true_effects(
    dgp: &StructuralDgp,
    contrast: &ExposureContrast,
    n_mc: usize,
    seed: u64,
) -> Result<TrueEffects, OracleError> {
    compute(dgp, contrast, n_mc, seed, true)
}

/// True effects with nobody dying before the horizon.
pub fn true_conditional_effects(
    dgp: &StructuralDgp,
    contrast: &ExposureContrast,
    n_mc: usize,
    seed: u64,
) -> Result<TrueEffects, OracleError> {
    compute(dgp, contrast, n_mc, seed, false)
}

fn subject(
    dgp: &StructuralDgp,
    contrast: &ExposureContrast,
    root: StreamKey,
    i: usize,
    death_process: bool,
) -> (Option<Outcome>, usize) {
    let level = |cmp: bool| if cmp { contrast.a_cmp } else { contrast.a_ref };
    let v = &dgp.visit_times;
    'attempt: for attempt in 0..MAX_ATTEMPTS {
        let d = SubjectDraws::draw(dgp, &mut root.child(i as u64).child(attempt).rng());
        let mut out = [(0.0, 0.0, 0.0); 5];
        for (slot, (_, (y, dd, m))) in out.iter_mut().zip(REGIMES) {
            let Some(path) = Trajectory::simulate(dgp, &d, (level(y), level(dd), level(m)), death_process) else {
                continue 'attempt;
            };
            let tau = path.time_at_risk(dgp.horizon);
            let cum = path.cumulative_hazard(v, tau);
            *slot = (cum, tau, (-cum).exp().min(1.0));
        }
        return (Some(out), attempt as usize);
    }
    (None, MAX_ATTEMPTS as usize)
}

fn chunks(n: usize) -> impl IndexedParallelIterator<Item = std::ops::Range<usize>> {
    (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(move |c| c * CHUNK..((c + 1) * CHUNK).min(n))
}

fn compute(
    dgp: &StructuralDgp,
    contrast: &ExposureContrast,
    n_mc: usize,
    seed: u64,
    death_process: bool,
) -> Result<TrueEffects, OracleError> {
    dgp.validate()?;
    if n_mc == 0 {
        return Err(OracleError::NoSubjects);
    }
    let root = StreamKey::new(seed).child(purpose::ORACLE);

    // Pass 1: regime totals. Chunks are summed in a fixed order so the result
    // does not depend on the thread count.
    let partial: Vec<Result<([[f64; 3]; 5], usize), usize>> = chunks(n_mc)
        .map(|range| {
            let mut sums = [[0.0; 3]; 5];
            let mut rejected = 0;
            for i in range {
                let (out, r) = subject(dgp, contrast, root, i, death_process);
                rejected += r;
                let out = out.ok_or(rejected)?;
                for (s, (cum, tau, surv)) in sums.iter_mut().zip(out) {
                    s[0] += cum;
                    s[1] += tau;
                    s[2] += surv;
                }
            }
            Ok((sums, rejected))
        })
        .collect();
    let mut totals = [[0.0; 3]; 5];
    let mut rejected = 0;
    for p in partial {
        match p {
            Ok((sums, r)) => {
                rejected += r;
                for (t, s) in totals.iter_mut().zip(sums) {
                    for j in 0..3 {
                        t[j] += s[j];
                    }
                }
            }
            Err(r) => {
                return Err(OracleError::HazardNegativityBudgetExceeded {
                    rejected: rejected + r,
                    attempted: n_mc + rejected + r,
                })
            }
        }
    }
    check_budget(rejected, n_mc + rejected)?;

    let n = n_mc as f64;
    let rate: Vec<f64> = totals.iter().map(|t| t[0] / t[1]).collect();
    let mean_tau: Vec<f64> = totals.iter().map(|t| t[1] / n).collect();
    let surv: Vec<f64> = totals.iter().map(|t| t[2] / n).collect();

    let contrasts: Vec<(Effect, usize, usize)> = CONTRASTS
        .into_iter()
        .filter(|(e, _, _)| death_process || *e != Effect::IndirectDeath)
        .collect();

    // Pass 2: influence values of each contrast. The rate is a ratio of
    // means, so its influence is (Λ − Rτ) / E[τ].
    let partial: Vec<Vec<[f64; 4]>> = chunks(n_mc)
        .map(|range| {
            let mut acc = vec![[0.0; 4]; contrasts.len()];
            for i in range {
                let (out, _) = subject(dgp, contrast, root, i, death_process);
                let out = out.expect("accepted in the first pass");
                let infl = |r: usize| (out[r].0 - rate[r] * out[r].1) / mean_tau[r];
                for (a, &(_, hi, lo)) in acc.iter_mut().zip(&contrasts) {
                    let h = infl(hi) - infl(lo);
                    let s = out[hi].2 - out[lo].2;
                    a[0] += h;
                    a[1] += h * h;
                    a[2] += s;
                    a[3] += s * s;
                }
            }
            acc
        })
        .collect();
    let mut moments = vec![[0.0; 4]; contrasts.len()];
    for p in partial {
        for (m, a) in moments.iter_mut().zip(p) {
            for j in 0..4 {
                m[j] += a[j];
            }
        }
    }
    let se = |sum: f64, sq: f64| {
        if n_mc < 2 {
            return 0.0;
        }
        ((sq - sum * sum / n).max(0.0) / (n - 1.0) / n).sqrt()
    };

    let effects = contrasts
        .iter()
        .zip(&moments)
        .map(|(&(effect, hi, lo), m)| TrueEffect {
            effect,
            hazard_diff: (rate[hi] - rate[lo]) * PER_100K,
            hazard_se: se(m[0], m[1]) * PER_100K,
            surv_prob_diff: (surv[hi] - surv[lo]) * 100.0,
            surv_se: se(m[2], m[3]) * 100.0,
        })
        .collect();
    let phi = REGIMES
        .iter()
        .enumerate()
        .map(|(r, (label, _))| TruePhi {
            label: label.to_string(),
            rate_per_100k: rate[r] * PER_100K,
            outcome_free: surv[r],
            mean_time_at_risk: mean_tau[r],
        })
        .collect();

    Ok(TrueEffects {
        death_process,
        contrast: *contrast,
        n_mc,
        seed,
        rejected,
        effects,
        phi,
    })
}
