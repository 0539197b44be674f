use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{check_design, EstimationError};

/// Ordinary least squares fit. `coefficients` follow the design columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModelFit {
    pub coefficients: Vec<f64>,
    pub residual_sd: f64,
    pub design_column_names: Vec<String>,
}

impl LinearModelFit {
    pub fn with_names(mut self, names: Vec<String>) -> Self {
        self.design_column_names = names;
        self
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        self.coefficients.iter().zip(row).map(|(b, x)| b * x).sum()
    }
}

/// Least squares via Householder QR; `residual_sd = sqrt(RSS / (n - q))`.
pub fn fit_linear(design: &DMatrix<f64>, response: &[f64]) -> Result<LinearModelFit, EstimationError> {
    check_design(design, response.len())?;
    if response.iter().any(|y| !y.is_finite()) {
        return Err(EstimationError::NonFiniteInput);
    }
    let (n, q) = design.shape();
    let y = DVector::from_column_slice(response);

    let qr = design.clone().qr();
    let qty = qr.q().transpose() * &y;
    let beta = qr
        .r()
        .solve_upper_triangular(&qty)
        .ok_or(EstimationError::RankDeficientDesign { ratio: 0.0 })?;

    let residuals = &y - design * &beta;
    let rss = residuals.norm_squared();
    Ok(LinearModelFit {
        coefficients: beta.iter().copied().collect(),
        residual_sd: (rss / (n - q) as f64).sqrt(),
        design_column_names: (0..q).map(|j| format!("x{j}")).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamKey;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn exact_line() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0]);
        let fit = fit_linear(&x, &[1.0, 3.0, 5.0]).unwrap();
        assert!((fit.coefficients[0] - 1.0).abs() < 1e-12);
        assert!((fit.coefficients[1] - 2.0).abs() < 1e-12);
        assert!(fit.residual_sd < 1e-12);
    }

    #[test]
    fn intercept_only_constant() {
        let x = DMatrix::from_element(5, 1, 1.0);
        let fit = fit_linear(&x, &[4.0; 5]).unwrap();
        assert!((fit.coefficients[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn rank_deficient_and_short() {
        let x = DMatrix::from_row_slice(4, 3, &[
            1.0, 1.0, 2.0, //
            1.0, 2.0, 4.0, //
            1.0, 3.0, 6.0, //
            1.0, 4.0, 8.0,
        ]);
        assert!(matches!(
            fit_linear(&x, &[1.0, 2.0, 3.0, 4.0]),
            Err(EstimationError::RankDeficientDesign { .. })
        ));
        let x = DMatrix::from_element(2, 2, 1.0);
        assert!(matches!(
            fit_linear(&x, &[1.0, 2.0]),
            Err(EstimationError::InsufficientRows { .. })
        ));
    }

    #[test]
    fn residuals_orthogonal_to_columns() {
        let mut rng = StreamKey::new(11).rng();
        let n = 80;
        let mut data = Vec::with_capacity(n * 3);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            let e: f64 = StandardNormal.sample(&mut rng);
            data.extend([1.0, 100.0 + 10.0 * a, b]);
            y.push(3.0 + 0.2 * a - b + e);
        }
        let x = DMatrix::from_row_slice(n, 3, &data);
        let fit = fit_linear(&x, &y).unwrap();
        let beta = DVector::from_vec(fit.coefficients.clone());
        let r = DVector::from_vec(y.clone()) - &x * beta;
        let xtr = x.transpose() * r;
        let scale = x.abs().max() * y.iter().map(|v| v.abs()).fold(0.0, f64::max) * n as f64;
        assert!(xtr.amax() <= 1e-8 * scale, "{}", xtr.amax());
    }
}
