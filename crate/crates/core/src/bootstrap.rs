//! Nonparametric bootstrap over subjects. Every replicate refits all models
//! and reruns the simulation with its own random streams; intervals are
//! percentile intervals and the point estimate is the bootstrap median.

use std::sync::atomic::{AtomicUsize, Ordering};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::CohortDataset;
use crate::engine::{
    conditional_on_survival_effects, estimate_effects, fit_model_set, Analysis, Effect,
    EffectEstimate, EffectTable, EngineError, EngineOptions, ExposureContrast, FittedModelSet,
    SimulationStreams,
};
use crate::rng::{purpose, StreamKey};

#[derive(Debug, Error)]
pub enum BootstrapError {
    #[error("no samples")]
    Empty,
    #[error("non-finite sample")]
    NonFinite,
    #[error("invalid bootstrap settings: {0}")]
    InvalidConfig(String),
    #[error("full-sample estimate failed: {0}")]
    PlugIn(#[source] EngineError),
    #[error("{failed} of {total} bootstrap iterations failed (first failure: {first})")]
    TooManyFailures {
        failed: usize,
        total: usize,
        first: String,
    },
}

/// Sample quantile by linear interpolation between order statistics:
/// with `h = (n − 1) q`, the value is `x[⌊h⌋] + (h − ⌊h⌋)(x[⌊h⌋+1] − x[⌊h⌋])`
/// on the sorted sample (0-based).
pub fn quantile(samples: &[f64], q: f64) -> Result<f64, BootstrapError> {
    if samples.is_empty() {
        return Err(BootstrapError::Empty);
    }
    if samples.iter().any(|x| x.is_nan()) {
        return Err(BootstrapError::NonFinite);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted_quantile(&sorted, q))
}

fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntervalSummary {
    /// Bootstrap median.
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    /// Bootstrap standard deviation (divisor `n − 1`).
    pub sd: f64,
}

pub fn summarize_samples(samples: &[f64], ci_level: f64) -> Result<IntervalSummary, BootstrapError> {
    if samples.is_empty() {
        return Err(BootstrapError::Empty);
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(BootstrapError::NonFinite);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let sd = if sorted.len() > 1 {
        (sorted.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let alpha = (1.0 - ci_level) / 2.0;
    Ok(IntervalSummary {
        point: sorted_quantile(&sorted, 0.5),
        lower: sorted_quantile(&sorted, alpha),
        upper: sorted_quantile(&sorted, 1.0 - alpha),
        sd,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapSettings {
    pub n_iterations: usize,
    pub master_seed: u64,
    pub ci_level: f64,
    /// Largest tolerated fraction of failed iterations.
    pub max_failure_fraction: f64,
}

impl Default for BootstrapSettings {
    fn default() -> Self {
        BootstrapSettings {
            n_iterations: 1000,
            master_seed: 20240101,
            ci_level: 0.95,
            max_failure_fraction: 0.05,
        }
    }
}

impl BootstrapSettings {
    pub fn validate(&self) -> Result<(), BootstrapError> {
        if self.n_iterations < 2 {
            return Err(BootstrapError::InvalidConfig("n_iterations must be at least 2".into()));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(BootstrapError::InvalidConfig(format!(
                "ci_level {} outside (0, 1)",
                self.ci_level
            )));
        }
        if !(0.0..1.0).contains(&self.max_failure_fraction) {
            return Err(BootstrapError::InvalidConfig(format!(
                "max_failure_fraction {} outside [0, 1)",
                self.max_failure_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BootstrapEffect {
    pub effect: Effect,
    pub hazard_diff: IntervalSummary,
    pub surv_prob_diff: IntervalSummary,
    /// Estimate on the full cohort.
    pub plug_in: EffectEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapResult {
    pub analysis: Analysis,
    pub contrast: ExposureContrast,
    pub ci_level: f64,
    pub effects: Vec<BootstrapEffect>,
    pub plug_in: EffectTable,
}

impl BootstrapResult {
    pub fn get(&self, effect: Effect) -> Option<&BootstrapEffect> {
        self.effects.iter().find(|e| e.effect == effect)
    }
}

/// Everything produced by one bootstrap run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapRun {
    pub results: Vec<BootstrapResult>,
    pub n_iterations: usize,
    pub n_failed: usize,
    /// Failure messages keyed by iteration index.
    pub failures: Vec<(usize, String)>,
    /// Models fitted on the full cohort.
    #[serde(skip)]
    pub full_models: FittedModelSet,
    /// Effect tables of each successful iteration, one per analysis.
    #[serde(skip)]
    pub iterations: Vec<Vec<EffectTable>>,
}

/// Subject indices for bootstrap iteration `b`.
pub fn resample_indices(n: usize, master_seed: u64, b: u64) -> Vec<usize> {
    let mut rng = StreamKey::new(master_seed)
        .child(purpose::RESAMPLE)
        .child(b)
        .rng();
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

fn analyse(
    analysis: Analysis,
    models: &FittedModelSet,
    cohort: &CohortDataset,
    contrast: &ExposureContrast,
    options: &EngineOptions,
    streams: SimulationStreams,
) -> Result<EffectTable, EngineError> {
    match analysis {
        Analysis::CompetingRisks => estimate_effects(models, cohort, contrast, options, streams),
        Analysis::ConditionalOnSurvival => {
            conditional_on_survival_effects(models, cohort, contrast, options, streams)
        }
    }
}

/// Bootstrap the requested analyses together: each iteration draws one
/// resample, fits one model set and evaluates every analysis on it.
/// `progress` is called with the number of completed iterations.
pub fn run_bootstrap(
    cohort: &CohortDataset,
    contrast: &ExposureContrast,
    options: &EngineOptions,
    settings: &BootstrapSettings,
    analyses: &[Analysis],
    progress: &(dyn Fn(usize) + Sync),
) -> Result<BootstrapRun, BootstrapError> {
    settings.validate()?;
    let full_models = fit_model_set(cohort).map_err(BootstrapError::PlugIn)?;
    let plug_in_streams = SimulationStreams::plug_in(settings.master_seed);
    let plug_in = analyses
        .iter()
        .map(|&a| analyse(a, &full_models, cohort, contrast, options, plug_in_streams))
        .collect::<Result<Vec<_>, _>>()
        .map_err(BootstrapError::PlugIn)?;

    let done = AtomicUsize::new(0);
    let n = cohort.n_subjects();
    let outcomes: Vec<Result<Vec<EffectTable>, String>> = (0..settings.n_iterations)
        .into_par_iter()
        .map(|b| {
            let indices = resample_indices(n, settings.master_seed, b as u64);
            let sample = cohort.resample(&indices);
            let streams = SimulationStreams::new(settings.master_seed, b as u64);
            let result = fit_model_set(&sample).and_then(|models| {
                analyses
                    .iter()
                    .map(|&a| analyse(a, &models, &sample, contrast, options, streams))
                    .collect::<Result<Vec<_>, _>>()
            });
            progress(done.fetch_add(1, Ordering::Relaxed) + 1);
            result.map_err(|e| e.to_string())
        })
        .collect();

    let failures: Vec<(usize, String)> = outcomes
        .iter()
        .enumerate()
        .filter_map(|(b, r)| r.as_ref().err().map(|e| (b, e.clone())))
        .collect();
    let n_failed = failures.len();
    if n_failed as f64 > settings.max_failure_fraction * settings.n_iterations as f64 {
        return Err(BootstrapError::TooManyFailures {
            failed: n_failed,
            total: settings.n_iterations,
            first: failures[0].1.clone(),
        });
    }
    let tables: Vec<Vec<EffectTable>> = outcomes.into_iter().filter_map(Result::ok).collect();

    let mut results = Vec::with_capacity(analyses.len());
    for (j, full) in plug_in.into_iter().enumerate() {
        let mut effects = Vec::with_capacity(full.estimates.len());
        for est in &full.estimates {
            let pick = |f: fn(&EffectEstimate) -> f64| -> Vec<f64> {
                tables
                    .iter()
                    .map(|t| f(t[j].get(est.effect).expect("same analysis")))
                    .collect()
            };
            effects.push(BootstrapEffect {
                effect: est.effect,
                hazard_diff: summarize_samples(&pick(|e| e.hazard_diff), settings.ci_level)?,
                surv_prob_diff: summarize_samples(&pick(|e| e.surv_prob_diff), settings.ci_level)?,
                plug_in: *est,
            });
        }
        results.push(BootstrapResult {
            analysis: full.analysis,
            contrast: *contrast,
            ci_level: settings.ci_level,
            effects,
            plug_in: full,
        });
    }
    Ok(BootstrapRun {
        results,
        n_iterations: settings.n_iterations,
        n_failed,
        failures,
        full_models,
        iterations: tables,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn summary_of_one_to_hundred() {
        let xs: Vec<f64> = (1..=100).map(f64::from).collect();
        let s = summarize_samples(&xs, 0.95).unwrap();
        assert!((s.point - 50.5).abs() < 1e-12);
        assert!((s.lower - 3.475).abs() < 1e-12);
        assert!((s.upper - 97.525).abs() < 1e-12);
    }

    #[test]
    fn quantile_edges() {
        assert_eq!(quantile(&[3.0], 0.3).unwrap(), 3.0);
        assert_eq!(quantile(&[4.0, 1.0, 2.0, 3.0], 0.0).unwrap(), 1.0);
        assert_eq!(quantile(&[4.0, 1.0, 2.0, 3.0], 1.0).unwrap(), 4.0);
        assert!(matches!(quantile(&[], 0.5), Err(BootstrapError::Empty)));
        assert!(matches!(quantile(&[f64::NAN], 0.5), Err(BootstrapError::NonFinite)));
    }

    #[test]
    fn resampling_is_reproducible() {
        let a = resample_indices(50, 9, 3);
        assert_eq!(a, resample_indices(50, 9, 3));
        assert_ne!(a, resample_indices(50, 9, 4));
        assert!(a.iter().all(|&i| i < 50));
    }

    #[test]
    fn settings_validation() {
        assert!(BootstrapSettings::default().validate().is_ok());
        let bad = BootstrapSettings { ci_level: 1.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = BootstrapSettings { n_iterations: 1, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn interval_is_ordered(xs in prop::collection::vec(-1e6f64..1e6, 1..200), level in 0.5f64..0.99) {
            let s = summarize_samples(&xs, level).unwrap();
            let min = xs.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(min <= s.lower && s.lower <= s.point && s.point <= s.upper && s.upper <= max);
        }

        #[test]
        fn quantile_is_monotone(xs in prop::collection::vec(-1e3f64..1e3, 1..50), q1 in 0.0f64..1.0, q2 in 0.0f64..1.0) {
            let (lo, hi) = if q1 <= q2 { (q1, q2) } else { (q2, q1) };
            prop_assert!(quantile(&xs, lo).unwrap() <= quantile(&xs, hi).unwrap());
        }
    }
}
