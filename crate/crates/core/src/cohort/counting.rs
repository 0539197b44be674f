use serde::Serialize;

use super::{CohortDataset, CohortError, EventKind};

/// One `(t_start, t_stop]` row of the counting-process layout.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountingProcessRow {
    /// Position of the subject in the source cohort.
    pub subject: usize,
    pub t_start: f64,
    pub t_stop: f64,
    pub outcome_event: bool,
    pub exposure: f64,
    pub baseline: Vec<f64>,
    pub current_mediator: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountingProcessTable {
    pub subject_ids: Vec<String>,
    pub rows: Vec<CountingProcessRow>,
    pub covariate_names: Vec<String>,
}

/// Covariate available on a counting-process row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CovariateColumn {
    Exposure,
    Mediator,
    Baseline(usize),
}

impl CountingProcessRow {
    pub fn covariate(&self, column: CovariateColumn) -> f64 {
        match column {
            CovariateColumn::Exposure => self.exposure,
            CovariateColumn::Mediator => self.current_mediator,
            CovariateColumn::Baseline(j) => self.baseline[j],
        }
    }
}

impl CountingProcessTable {
    pub fn n_events(&self) -> usize {
        self.rows.iter().filter(|r| r.outcome_event).count()
    }

    pub fn person_time(&self) -> f64 {
        self.rows.iter().map(|r| r.t_stop - r.t_start).sum()
    }

    pub fn column_name(&self, column: CovariateColumn) -> String {
        match column {
            CovariateColumn::Exposure => "exposure".to_string(),
            CovariateColumn::Mediator => "mediator".to_string(),
            CovariateColumn::Baseline(j) => self.covariate_names[j].clone(),
        }
    }
}

/// Split each subject's follow-up `(0, event_time]` at the visit times.
pub fn to_counting_process(cohort: &CohortDataset) -> Result<CountingProcessTable, CohortError> {
    to_counting_process_clipped(cohort, None)
}

/// As [`to_counting_process`], optionally ending follow-up at `clip`;
/// outcome events after `clip` become censored.
pub fn to_counting_process_clipped(
    cohort: &CohortDataset,
    clip: Option<f64>,
) -> Result<CountingProcessTable, CohortError> {
    let v = &cohort.visit_times;
    let k = cohort.n_visits();
    let mut rows = Vec::with_capacity(cohort.n_subjects() * k);

    for (idx, s) in cohort.subjects.iter().enumerate() {
        if !(s.event_time > 0.0) {
            return Err(CohortError::EventTimeNonPositive {
                id: s.id.clone(),
                time: s.event_time,
            });
        }
        let end = clip.map_or(s.event_time, |c| s.event_time.min(c));
        let is_event = s.event == EventKind::Outcome && clip.is_none_or(|c| s.event_time <= c);
        let first_row = rows.len();
        for j in 0..k {
            let start = v[j];
            if start >= end {
                break;
            }
            let stop = if j + 1 == k { end } else { v[j + 1].min(end) };
            let mediator = s.mediator[j]
                .value()
                .ok_or_else(|| CohortError::MediatorUnavailable {
                    id: s.id.clone(),
                    interval: j + 1,
                })?;
            rows.push(CountingProcessRow {
                subject: idx,
                t_start: start,
                t_stop: stop,
                outcome_event: false,
                exposure: s.exposure,
                baseline: s.baseline.clone(),
                current_mediator: mediator,
            });
        }
        if is_event && rows.len() > first_row {
            rows.last_mut().expect("non-empty").outcome_event = true;
        }
    }

    Ok(CountingProcessTable {
        subject_ids: cohort.subjects.iter().map(|s| s.id.clone()).collect(),
        rows,
        covariate_names: cohort.covariate_names.clone(),
    })
}
