//! Longitudinal cohort data: one record per subject with baseline covariates,
//! exposure, `K` mediator measurements, `K` death-interval indicators and a
//! (possibly competing) event time.
//!
//! Visit grid convention: `visit_times` has `K + 1` entries starting at 0.
//! Interval `k` (0-based) is `(visit_times[k], visit_times[k + 1]]`. The
//! mediator `M_{k+1}` is measured at the interval's opening visit and governs
//! the outcome hazard over the whole interval; `D_{k+1}` flags death inside
//! the interval. For outcome follow-up the final interval stays open past
//! `visit_times[K]` up to the end of follow-up.

mod counting;
mod csv_io;
mod validate;

pub use counting::{
    to_counting_process, to_counting_process_clipped, CountingProcessRow, CountingProcessTable,
    CovariateColumn,
};
pub use csv_io::{read_cohort_csv, write_cohort_csv, CsvSchema};
pub use validate::{validate_cohort, ValidationErrors, ValidationIssue, Violation};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CohortError {
    #[error(transparent)]
    Validation(#[from] ValidationErrors),
    #[error("subject {id}: event time {time} is not positive")]
    EventTimeNonPositive { id: String, time: f64 },
    #[error("subject {id}: no observed mediator for interval {interval}")]
    MediatorUnavailable { id: String, interval: usize },
    #[error("csv line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error("csv: {0}")]
    CsvFormat(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// One mediator slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MediatorValue {
    Observed(f64),
    /// Structurally missing because the subject died in an earlier interval.
    DeathTruncated,
    /// Missing for any other reason. Rejected by validation.
    Missing,
}

impl MediatorValue {
    pub fn value(self) -> Option<f64> {
        match self {
            MediatorValue::Observed(v) => Some(v),
            _ => None,
        }
    }
}

/// How a subject's follow-up ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Censored,
    Outcome,
    CompetingDeath,
}

impl EventKind {
    pub fn code(self) -> u8 {
        match self {
            EventKind::Censored => 0,
            EventKind::Outcome => 1,
            EventKind::CompetingDeath => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(EventKind::Censored),
            1 => Some(EventKind::Outcome),
            2 => Some(EventKind::CompetingDeath),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub id: String,
    pub exposure: f64,
    pub baseline: Vec<f64>,
    pub mediator: Vec<MediatorValue>,
    pub death: Vec<bool>,
    pub event_time: f64,
    pub event: EventKind,
}

impl SubjectRecord {
    /// Survival indicator `S_k` for 1-based `k`; `S_0 = 1`.
    pub fn alive_after(&self, k: usize) -> bool {
        k == 0 || !self.death[k - 1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortDataset {
    pub subjects: Vec<SubjectRecord>,
    pub visit_times: Vec<f64>,
    pub horizon: f64,
    pub covariate_names: Vec<String>,
}

impl CohortDataset {
    pub fn new(
        subjects: Vec<SubjectRecord>,
        visit_times: Vec<f64>,
        horizon: f64,
        covariate_names: Vec<String>,
    ) -> Self {
        CohortDataset {
            subjects,
            visit_times,
            horizon,
            covariate_names,
        }
    }

    pub fn n_visits(&self) -> usize {
        self.visit_times.len().saturating_sub(1)
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    /// Cohort made of the given subject indices (with repetition allowed).
    /// Ids are suffixed with the draw position so they stay unique.
    pub fn resample(&self, indices: &[usize]) -> CohortDataset {
        let subjects = indices
            .iter()
            .enumerate()
            .map(|(pos, &i)| {
                let mut s = self.subjects[i].clone();
                s.id = format!("{}#{}", s.id, pos);
                s
            })
            .collect();
        CohortDataset {
            subjects,
            visit_times: self.visit_times.clone(),
            horizon: self.horizon,
            covariate_names: self.covariate_names.clone(),
        }
    }

    pub fn exposures(&self) -> Vec<f64> {
        self.subjects.iter().map(|s| s.exposure).collect()
    }
}

/// 0-based interval holding time `t > 0`; times past the last visit belong
/// to the final interval.
pub fn interval_of(visit_times: &[f64], t: f64) -> usize {
    let k = visit_times.len() - 1;
    (0..k - 1).find(|&j| t <= visit_times[j + 1]).unwrap_or(k - 1)
}
