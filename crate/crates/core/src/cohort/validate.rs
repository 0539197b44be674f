use std::collections::HashSet;
use std::fmt;

use serde::Serialize;

use super::{interval_of, CohortDataset, EventKind, MediatorValue};

/// Rule broken by a cohort record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Violation {
    NonMonotoneVisitTimes,
    InvalidHorizon,
    DuplicateId,
    WrongSlotCount,
    BaselineWidthMismatch,
    NonFiniteValue,
    EventTimeNonPositive,
    NonAbsorbingDeath,
    MediatorAfterDeath,
    DeathTokenWhileAlive,
    MissingMediator,
    DeathBeforeEvent,
    DeathTimeMismatch,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationIssue {
    /// `None` for dataset-level problems.
    pub subject: Option<String>,
    pub violation: Violation,
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.subject {
            Some(id) => write!(f, "{:?} (subject {})", self.violation, id),
            None => write!(f, "{:?}", self.violation),
        }
    }
}

/// Every violation found, in subject order.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationErrors(pub Vec<ValidationIssue>);

impl ValidationErrors {
    pub fn issues(&self) -> &[ValidationIssue] {
        &self.0
    }

    /// First subject breaking `rule`, if any.
    pub fn first(&self, rule: Violation) -> Option<&ValidationIssue> {
        self.0.iter().find(|i| i.violation == rule)
    }

    pub fn contains(&self, rule: Violation) -> bool {
        self.first(rule).is_some()
    }
}

impl fmt::Display for ValidationErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "cohort validation failed: ")?;
        for (i, issue) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{issue}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ValidationErrors {}

/// Check every structural invariant of the cohort. Returns the dataset
/// unchanged when it is valid.
pub fn validate_cohort(raw: CohortDataset) -> Result<CohortDataset, ValidationErrors> {
    let mut issues = Vec::new();
    let mut push = |subject: Option<&str>, violation| {
        issues.push(ValidationIssue {
            subject: subject.map(str::to_string),
            violation,
        })
    };

    let v = &raw.visit_times;
    let grid_ok = v.len() >= 2
        && v[0] == 0.0
        && v.iter().all(|t| t.is_finite())
        && v.windows(2).all(|w| w[0] < w[1]);
    if !grid_ok {
        push(None, Violation::NonMonotoneVisitTimes);
    }
    if !(raw.horizon.is_finite() && raw.horizon > 0.0 && (!grid_ok || raw.horizon >= v[v.len() - 1])) {
        push(None, Violation::InvalidHorizon);
    }

    let k = raw.n_visits();
    let p = raw.n_covariates();
    let mut seen = HashSet::with_capacity(raw.subjects.len());

    for s in &raw.subjects {
        let id = Some(s.id.as_str());
        if !seen.insert(s.id.as_str()) {
            push(id, Violation::DuplicateId);
        }
        if s.mediator.len() != k || s.death.len() != k {
            push(id, Violation::WrongSlotCount);
            continue;
        }
        if s.baseline.len() != p {
            push(id, Violation::BaselineWidthMismatch);
        }
        let finite = s.exposure.is_finite()
            && s.baseline.iter().all(|x| x.is_finite())
            && s.mediator.iter().all(|m| m.value().is_none_or(f64::is_finite));
        if !finite || !s.event_time.is_finite() {
            push(id, Violation::NonFiniteValue);
        }
        if s.event_time <= 0.0 {
            push(id, Violation::EventTimeNonPositive);
        }

        if s.death.windows(2).any(|w| w[0] && !w[1]) {
            push(id, Violation::NonAbsorbingDeath);
        }

        // M_k is measured at the opening visit of interval k, so it exists
        // iff the subject survived intervals 1..k-1.
        let mut after_death = false;
        let mut token_while_alive = false;
        let mut missing = false;
        for j in 0..k {
            let alive_at_visit = j == 0 || !s.death[j - 1];
            match s.mediator[j] {
                MediatorValue::Observed(_) if !alive_at_visit => after_death = true,
                MediatorValue::DeathTruncated if alive_at_visit => token_while_alive = true,
                MediatorValue::Missing => missing = true,
                _ => {}
            }
        }
        if after_death {
            push(id, Violation::MediatorAfterDeath);
        }
        if token_while_alive {
            push(id, Violation::DeathTokenWhileAlive);
        }
        if missing {
            push(id, Violation::MissingMediator);
        }

        if grid_ok && s.event_time > 0.0 && s.event_time.is_finite() {
            let j = interval_of(v, s.event_time);
            let died_before = j > 0 && s.death[j - 1];
            match s.event {
                EventKind::Outcome | EventKind::Censored if died_before => {
                    push(id, Violation::DeathBeforeEvent)
                }
                EventKind::CompetingDeath if died_before || !s.death[j] => {
                    push(id, Violation::DeathTimeMismatch)
                }
                _ => {}
            }
        }
    }

    if issues.is_empty() {
        Ok(raw)
    } else {
        Err(ValidationErrors(issues))
    }
}
