//! Regression estimators used by the g-formula: least squares for the
//! mediator models, Newton-fitted logistic regression for the death models
//! and the Lin-Ying additive hazards model for the outcome.

mod additive_hazards;
mod linear;
mod logistic;

pub use additive_hazards::{
    fit_additive_hazards, lin_ying_system, predict_hazard_rate, predict_survival,
    AdditiveHazardsFit, BaselineCumulativeHazard, CovariatePath, SurvivalPrediction,
};
pub use linear::{fit_linear, LinearModelFit};
pub use logistic::{fit_logistic, LogisticModelFit, LogisticOptions};

use nalgebra::DMatrix;
use thiserror::Error;

/// Smallest accepted ratio of extreme singular values of a design.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimationError {
    #[error("design is rank deficient (singular value ratio {ratio:.3e})")]
    RankDeficientDesign { ratio: f64 },
    #[error("{rows} rows are not enough for {columns} columns")]
    InsufficientRows { rows: usize, columns: usize },
    #[error("response has a single class")]
    SingleClassResponse,
    #[error("complete or quasi-complete separation suspected")]
    SeparationSuspected,
    #[error("Newton iterations did not converge in {iterations} steps")]
    DidNotConverge { iterations: usize },
    #[error("no outcome events")]
    NoEvents,
    #[error("information matrix is singular")]
    SingularInformation,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("horizon {0} is before time zero")]
    HorizonBeforeZero(f64),
    #[error("non-finite input")]
    NonFiniteInput,
}

/// Ratio of smallest to largest singular value of `design`, computed from
/// the triangular factor of its QR decomposition.
pub(crate) fn singular_value_ratio(design: &DMatrix<f64>) -> f64 {
    let r = design.clone().qr().r();
    let sv = r.singular_values();
    let max = sv.max();
    if max == 0.0 {
        0.0
    } else {
        sv.min() / max
    }
}

pub(crate) fn check_design(design: &DMatrix<f64>, response_len: usize) -> Result<(), EstimationError> {
    let (n, q) = design.shape();
    if response_len != n {
        return Err(EstimationError::DimensionMismatch {
            expected: n,
            got: response_len,
        });
    }
    if n <= q {
        return Err(EstimationError::InsufficientRows { rows: n, columns: q });
    }
    if design.iter().any(|x| !x.is_finite()) {
        return Err(EstimationError::NonFiniteInput);
    }
    let ratio = singular_value_ratio(design);
    if ratio < RANK_TOLERANCE {
        return Err(EstimationError::RankDeficientDesign { ratio });
    }
    Ok(())
}
