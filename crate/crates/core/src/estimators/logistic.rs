use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{check_design, EstimationError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModelFit {
    /// Log-odds coefficients, in design column order.
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub log_likelihood: f64,
    pub design_column_names: Vec<String>,
}

impl LogisticModelFit {
    pub fn with_names(mut self, names: Vec<String>) -> Self {
        self.design_column_names = names;
        self
    }

    pub fn linear_predictor(&self, row: &[f64]) -> f64 {
        self.coefficients.iter().zip(row).map(|(b, x)| b * x).sum()
    }

    pub fn probability(&self, row: &[f64]) -> f64 {
        sigmoid(self.linear_predictor(row))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LogisticOptions {
    pub max_iterations: usize,
    pub score_tolerance: f64,
    pub relative_loglik_tolerance: f64,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        LogisticOptions {
            max_iterations: 100,
            score_tolerance: 1e-8,
            relative_loglik_tolerance: 1e-10,
        }
    }
}

#[inline]
pub(crate) fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(eta))` without overflow.
#[inline]
fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

fn log_likelihood(x: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>) -> f64 {
    let eta = x * beta;
    eta.iter().zip(y).map(|(&e, &yi)| yi * e - softplus(e)).sum()
}

/// Maximum likelihood logistic regression by Newton-Raphson with step
/// halving. Stops when the largest score component is below
/// `score_tolerance` or the relative log-likelihood change is below
/// `relative_loglik_tolerance`.
pub fn fit_logistic(
    design: &DMatrix<f64>,
    response: &[f64],
    options: LogisticOptions,
) -> Result<LogisticModelFit, EstimationError> {
    if response.iter().any(|&y| y != 0.0 && y != 1.0) {
        return Err(EstimationError::NonFiniteInput);
    }
    let ones = response.iter().filter(|&&y| y == 1.0).count();
    if ones == 0 || ones == response.len() {
        return Err(EstimationError::SingleClassResponse);
    }
    check_design(design, response.len())?;

    let (n, q) = design.shape();
    let mut beta = DVector::zeros(q);
    let mut ll = log_likelihood(design, response, &beta);

    for iteration in 1..=options.max_iterations {
        let eta = design * &beta;
        let p: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();
        let resid = DVector::from_iterator(n, response.iter().zip(&p).map(|(y, p)| y - p));
        let score = design.transpose() * resid;

        if score.amax() < options.score_tolerance {
            return Ok(finish(beta, iteration - 1, ll, q));
        }

        let mut weighted = design.clone();
        for (i, pi) in p.iter().enumerate() {
            let w = pi * (1.0 - pi);
            weighted.row_mut(i).scale_mut(w);
        }
        let information = design.transpose() * weighted;
        let step = match information.cholesky() {
            Some(chol) => chol.solve(&score),
            None => return Err(EstimationError::SeparationSuspected),
        };

        let mut scale = 1.0;
        let (next_beta, next_ll) = loop {
            let candidate = &beta + &step * scale;
            let cand_ll = log_likelihood(design, response, &candidate);
            if cand_ll.is_finite() && cand_ll >= ll - 1e-12 * ll.abs() {
                break (candidate, cand_ll);
            }
            scale *= 0.5;
            if scale < 1e-10 {
                return Err(EstimationError::SeparationSuspected);
            }
        };

        if !next_ll.is_finite() || next_beta.iter().any(|b| !b.is_finite()) {
            return Err(EstimationError::SeparationSuspected);
        }
        // A log-likelihood this close to zero means the classes are
        // perfectly split and the coefficients are running off.
        if next_ll > -1e-8 {
            return Err(EstimationError::SeparationSuspected);
        }

        let rel_change = (next_ll - ll).abs() / next_ll.abs().max(1e-300);
        beta = next_beta;
        ll = next_ll;
        if rel_change < options.relative_loglik_tolerance {
            return Ok(finish(beta, iteration, ll, q));
        }
    }

    // Saturated fitted probabilities at the iteration cap point to
    // quasi-complete separation rather than slow convergence.
    let eta = design * &beta;
    if eta.iter().any(|e| e.abs() > 30.0) {
        Err(EstimationError::SeparationSuspected)
    } else {
        Err(EstimationError::DidNotConverge {
            iterations: options.max_iterations,
        })
    }
}

fn finish(beta: DVector<f64>, iterations: usize, ll: f64, q: usize) -> LogisticModelFit {
    LogisticModelFit {
        coefficients: beta.iter().copied().collect(),
        converged: true,
        iterations,
        log_likelihood: ll,
        design_column_names: (0..q).map(|j| format!("x{j}")).collect(),
    }
}
