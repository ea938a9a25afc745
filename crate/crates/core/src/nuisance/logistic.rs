use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::boost::sigmoid;
use crate::error::{Error, Result};

/// Logistic-linear model on standardised covariates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    center: Vec<f64>,
    scale: Vec<f64>,
    /// Intercept first.
    coef: Vec<f64>,
}

impl LogisticModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let z = self.coef[0]
            + x.iter().zip(&self.center).zip(&self.scale).zip(&self.coef[1..]).map(|(((v, c), s), b)| b * (v - c) / s).sum::<f64>();
        sigmoid(z)
    }
}

/// Newton (IRLS) fit with a small ridge term for separable data.
pub fn fit_logistic(x: &[f64], d: usize, y: &[f64], ridge: f64) -> Result<LogisticModel> {
    let n = y.len();
    if n == 0 || x.len() != n * d {
        return Err(Error::Invalid("logistic fit needs a non-empty, aligned design".into()));
    }
    let mut center = vec![0.0; d];
    let mut scale = vec![1.0; d];
    for j in 0..d {
        let mean = (0..n).map(|i| x[i * d + j]).sum::<f64>() / n as f64;
        let var = (0..n).map(|i| (x[i * d + j] - mean).powi(2)).sum::<f64>() / n as f64;
        center[j] = mean;
        scale[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
    }
    let design = DMatrix::from_fn(n, d + 1, |i, j| if j == 0 { 1.0 } else { (x[i * d + j - 1] - center[j - 1]) / scale[j - 1] });
    let target = DVector::from_column_slice(y);
    let mut beta = DVector::<f64>::zeros(d + 1);
    for _ in 0..100 {
        let eta = &design * &beta;
        let p = eta.map(sigmoid);
        let w = p.map(|v| (v * (1.0 - v)).max(1e-10));
        let grad = design.transpose() * (&p - &target) + ridge * &beta;
        let mut weighted = design.clone();
        for (mut row, &wi) in weighted.row_iter_mut().zip(w.iter()) {
            row *= wi;
        }
        let mut hess = design.transpose() * weighted;
        for k in 0..=d {
            hess[(k, k)] += ridge;
        }
        let step = hess
            .cholesky()
            .ok_or_else(|| Error::Convergence { iterations: 0, detail: "singular logistic Hessian".into() })?
            .solve(&grad);
        beta -= &step;
        if step.amax() < 1e-10 {
            break;
        }
    }
    Ok(LogisticModel { center, scale, coef: beta.iter().copied().collect() })
}
