use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::boost::{fit_boosted, BoostConfig, BoostLoss, BoostedModel};
use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegressionMethod {
    Boosted,
    Linear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PseudoConfig {
    pub method: RegressionMethod,
    pub boost: BoostConfig,
}

impl Default for PseudoConfig {
    fn default() -> Self {
        PseudoConfig {
            method: RegressionMethod::Boosted,
            boost: BoostConfig { rounds: 100, learning_rate: 0.1, ..BoostConfig::default() },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ArmRegressor {
    Constant(f64),
    /// Intercept first.
    Linear(Vec<f64>),
    Boosted(BoostedModel),
}

impl ArmRegressor {
    pub fn predict(&self, x: &[f64]) -> f64 {
        match self {
            ArmRegressor::Constant(c) => *c,
            ArmRegressor::Linear(beta) => beta[0] + x.iter().zip(&beta[1..]).map(|(a, b)| a * b).sum::<f64>(),
            ArmRegressor::Boosted(m) => m.predict(x),
        }
    }
}

/// Per-arm regression of the pseudo-outcome on the covariates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PseudoOutcomeRegressor {
    pub arms: [ArmRegressor; 2],
}

impl PseudoOutcomeRegressor {
    pub fn predict(&self, a: u8, x: &[f64]) -> f64 {
        self.arms[usize::from(a.min(1))].predict(x)
    }
}

/// Regresses `z` on `X` separately within each arm of `fold`.
///
/// Every `z_i` must be finite; the first offending row is reported otherwise.
pub fn fit_pseudo_outcome(fold: &Dataset, z: &[f64], cfg: &PseudoConfig, seed: u64) -> Result<PseudoOutcomeRegressor> {
    if z.len() != fold.n() {
        return Err(Error::Invalid(format!("{} pseudo-outcomes for {} rows", z.len(), fold.n())));
    }
    if let Some(row) = z.iter().position(|v| !v.is_finite()) {
        return Err(Error::InfinitePseudoOutcome { row, t: z[row] });
    }
    let d = fold.d();
    let fit_arm = |arm: u8| -> Result<ArmRegressor> {
        let idx: Vec<usize> = (0..fold.n()).filter(|&i| fold.treatments()[i] == arm).collect();
        if idx.is_empty() {
            return Err(Error::Positivity(format!("no rows in arm {arm} for the pseudo-outcome regression")));
        }
        let target: Vec<f64> = idx.iter().map(|&i| z[i]).collect();
        if d == 0 {
            return Ok(ArmRegressor::Constant(target.iter().sum::<f64>() / target.len() as f64));
        }
        let mut x = Vec::with_capacity(idx.len() * d);
        for &i in &idx {
            x.extend_from_slice(fold.row(i));
        }
        match cfg.method {
            RegressionMethod::Boosted => {
                Ok(ArmRegressor::Boosted(fit_boosted(&x, d, &target, BoostLoss::Squared, &cfg.boost, seed ^ u64::from(arm))?))
            }
            RegressionMethod::Linear => least_squares(&x, d, &target).map(ArmRegressor::Linear),
        }
    };
    Ok(PseudoOutcomeRegressor { arms: [fit_arm(0)?, fit_arm(1)?] })
}

fn least_squares(x: &[f64], d: usize, y: &[f64]) -> Result<Vec<f64>> {
    let n = y.len();
    let design = DMatrix::from_fn(n, d + 1, |i, j| if j == 0 { 1.0 } else { x[i * d + j - 1] });
    let target = DVector::from_column_slice(y);
    let beta = design
        .svd(true, true)
        .solve(&target, 1e-12)
        .map_err(|e| Error::Convergence { iterations: 0, detail: e.to_string() })?;
    Ok(beta.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Phi;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn marginal_case_is_the_arm_mean() {
        let ds = Dataset::new(0, vec![], vec![0, 1, 1, 0, 1], vec![0.0; 5], Phi::Identity).unwrap();
        let z = [1.0, 2.0, 4.0, 3.0, 6.0];
        let m = fit_pseudo_outcome(&ds, &z, &PseudoConfig::default(), 0).unwrap();
        assert_eq!(m.predict(0, &[]), 2.0);
        assert_eq!(m.predict(1, &[]), 4.0);
    }

    #[test]
    fn infinite_target_names_the_row() {
        let ds = Dataset::new(0, vec![], vec![0, 1, 1], vec![0.0; 3], Phi::Identity).unwrap();
        let err = fit_pseudo_outcome(&ds, &[0.0, f64::INFINITY, 1.0], &PseudoConfig::default(), 0).unwrap_err();
        assert!(matches!(err, Error::InfinitePseudoOutcome { row: 1, .. }));
    }

    #[test]
    fn recovers_a_linear_signal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 10_000;
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let a: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let z: Vec<f64> = x.iter().map(|&v| v + 0.3 * (rng.random::<f64>() - 0.5)).collect();
        let ds = Dataset::new(1, x, a, vec![0.0; n], Phi::Identity).unwrap();
        let m = fit_pseudo_outcome(&ds, &z, &PseudoConfig::default(), 1).unwrap();
        let test: Vec<f64> = (0..1000).map(|k| -2.0 + 4.0 * (k as f64 + 0.5) / 1000.0).collect();
        let sse: f64 = test.iter().map(|&v| (m.predict(1, &[v]) - v).powi(2)).sum();
        let sst: f64 = test.iter().map(|&v| v * v).sum();
        assert!(1.0 - sse / sst > 0.8);
    }
}
