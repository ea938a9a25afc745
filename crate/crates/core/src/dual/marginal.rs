//! Per-arm bounds without covariates.

use serde::{Deserialize, Serialize};

use super::solve::{dual_on_values, psi, psi_sup};
use crate::data::Dataset;
use crate::divergence::Divergence;
use crate::error::{Error, Result};
use crate::nuisance::marginal_propensity;
use crate::Direction;

/// Fitted scalar duals and the resulting bound for one arm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmBound {
    pub arm: u8,
    pub n: usize,
    pub e_hat: f64,
    pub eta: f64,
    pub h: f64,
    pub lambda: f64,
    pub u: f64,
    /// Arm mean of the pseudo-outcome `g*((phi - u) / lambda)`.
    pub m_hat: f64,
    pub theta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginalFit {
    pub divergence: Divergence,
    pub direction: Direction,
    pub arms: [ArmBound; 2],
}

/// Sorted distinct values with their counts.
fn compress(values: &mut [f64]) -> (Vec<f64>, Vec<f64>) {
    values.sort_by(f64::total_cmp);
    let mut support: Vec<f64> = Vec::new();
    let mut counts: Vec<f64> = Vec::new();
    for &v in values.iter() {
        if support.last() == Some(&v) {
            *counts.last_mut().expect("non-empty") += 1.0;
        } else {
            support.push(v);
            counts.push(1.0);
        }
    }
    (support, counts)
}

/// Marginal bound for each arm: radius from `n_a / n`, scalar dual on the
/// arm's outcomes, then `lambda (eta + mean Z) + u`.
///
/// `eta_override` replaces the propensity-driven radius for both arms.
pub fn fit_marginal(data: &Dataset, div: Divergence, direction: Direction, eta_override: Option<f64>) -> Result<MarginalFit> {
    let e = marginal_propensity(data)?;
    if let Some(eta) = eta_override {
        if !(eta >= 0.0) || !eta.is_finite() {
            return Err(Error::Domain(format!("radius override must be finite and non-negative, got {eta}")));
        }
    }
    let sign = direction.sign();
    let phi = data.phi_values();
    let t0 = div.neutral_point();
    let arm_bound = |arm: u8| -> Result<ArmBound> {
        let mut values: Vec<f64> =
            phi.iter().zip(data.treatments()).filter(|(_, &a)| a == arm).map(|(&v, _)| sign * v).collect();
        let n = values.len();
        let e_hat = e[usize::from(arm)];
        let eta = match eta_override {
            Some(eta) => eta,
            None => div.radius(e_hat)?,
        };
        let (support, counts) = compress(&mut values);
        let sol = dual_on_values(&counts, &support, div, eta)?;
        let lambda = sol.lambda;
        let w = sol.u + lambda * t0;
        // pseudo-outcomes in shifted form; arguments sit inside the domain at the optimum
        let edge = psi_sup(div);
        let shifted: f64 = support
            .iter()
            .zip(&counts)
            .map(|(&v, &c)| {
                let r = ((v - w) / lambda).min(edge);
                c * (r + psi(div, r))
            })
            .sum::<f64>()
            / n as f64;
        let m_hat = t0 + shifted;
        let theta = lambda * (eta + shifted) + w;
        if !theta.is_finite() {
            return Err(Error::Convergence {
                iterations: 0,
                detail: format!("non-finite bound for arm {arm} (lambda = {lambda:e}, u = {:e})", sol.u),
            });
        }
        Ok(ArmBound { arm, n, e_hat, eta, h: lambda.ln(), lambda, u: sol.u, m_hat, theta: sign * theta })
    };
    Ok(MarginalFit { divergence: div, direction, arms: [arm_bound(0)?, arm_bound(1)?] })
}
