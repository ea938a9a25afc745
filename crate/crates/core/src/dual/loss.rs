//! Per-row dual risk, its debiasing correction, and gradients for the network.

use serde::{Deserialize, Serialize};

use super::network::{Cache, DualNetwork};
use super::solve::{psi, psi_d1, psi_sup};
use crate::divergence::Divergence;

/// Distance below the domain edge where the training surrogate turns linear.
pub(crate) const EDGE_MARGIN: f64 = 1e-3;
/// Distance below the domain edge used when projecting pseudo-outcome arguments.
pub(crate) const PROJECTION_MARGIN: f64 = 1e-6;
const BARRIER_SHARPNESS: f64 = 100.0;

/// Affine map between outcome units and the standardised units used inside the network.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardisation {
    pub center: f64,
    pub scale: f64,
}

impl Standardisation {
    pub fn fit(values: &[f64]) -> Self {
        let n = values.len().max(1) as f64;
        let center = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - center).powi(2)).sum::<f64>() / n;
        Standardisation { center, scale: if var > 0.0 { var.sqrt() } else { 1.0 } }
    }

    pub fn to_std(&self, v: f64) -> f64 {
        (v - self.center) / self.scale
    }

    pub fn from_std(&self, v: f64) -> f64 {
        self.center + self.scale * v
    }
}

/// `psi` continued linearly past `sup - EDGE_MARGIN`; returns value and slope.
pub(crate) fn psi_extended(div: Divergence, r: f64) -> (f64, f64) {
    let edge = psi_sup(div) - EDGE_MARGIN;
    if r <= edge {
        (psi(div, r), psi_d1(div, r))
    } else {
        let slope = psi_d1(div, edge);
        (psi(div, edge) + slope * (r - edge), slope)
    }
}

/// `(softplus(k (r - edge)) / k)^2`, negligible inside the domain.
fn barrier(div: Divergence, r: f64) -> (f64, f64) {
    let edge = psi_sup(div) - EDGE_MARGIN;
    let z = BARRIER_SHARPNESS * (r - edge);
    let softplus = if z > 30.0 { z } else { z.exp().ln_1p() };
    let sigma = 1.0 / (1.0 + (-z).exp());
    let s = softplus / BARRIER_SHARPNESS;
    (s * s, 2.0 * s * sigma)
}

/// Loss options for one training run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossSettings {
    pub debias: bool,
    pub barrier_weight: f64,
}

/// Inputs of one row in standardised units.
#[derive(Clone, Copy, Debug)]
pub struct RowInput<'a> {
    pub x: &'a [f64],
    pub a: u8,
    /// Standardised, sign-adjusted outcome functional.
    pub phi: f64,
    /// `e_0(x), e_1(x)`.
    pub e: [f64; 2],
    /// Radius for each arm at `x`.
    pub eta: [f64; 2],
    /// `d B_f / d e` at `e_a(x)` for each arm.
    pub eta_prime: [f64; 2],
}

/// Observed-arm risk `phi + lambda (eta + psi(r)) + barrier` and its derivatives in `(h, w')`.
pub(crate) fn observed_terms(div: Divergence, phi: f64, eta: f64, h: f64, w: f64, barrier_weight: f64) -> (f64, f64, f64) {
    let lambda = h.exp();
    let r = (phi - w) / lambda;
    let (pv, pd) = psi_extended(div, r);
    let (bv, bd) = if barrier_weight > 0.0 {
        let (v, d) = barrier(div, r);
        (barrier_weight * v, barrier_weight * d)
    } else {
        (0.0, 0.0)
    };
    let loss = phi + lambda * (eta + pv) + bv;
    let dr = lambda * pd + bd;
    let d_h = lambda * (eta + pv) - dr * r;
    let d_w = -dr / lambda;
    (loss, d_h, d_w)
}

/// `sum_a e_a lambda(a, x) B'(e_a) (1{A = a} - e_a)` for given `h(0, x), h(1, x)`.
pub(crate) fn correction(row: &RowInput, h: [f64; 2]) -> (f64, [f64; 2]) {
    let mut total = 0.0;
    let mut d = [0.0; 2];
    for arm in 0..2 {
        let indicator = f64::from(u8::from(usize::from(row.a) == arm));
        let c = row.e[arm] * h[arm].exp() * row.eta_prime[arm] * (indicator - row.e[arm]);
        total += c;
        d[arm] = c;
    }
    (total, d)
}

/// Per-row loss; when `grad` is given the parameter gradient is accumulated into it.
pub fn row_loss(
    net: &DualNetwork,
    div: Divergence,
    row: &RowInput,
    settings: LossSettings,
    grad: Option<&mut [f64]>,
    caches: &mut [Cache; 2],
    scratch: &mut Vec<f64>,
) -> f64 {
    let obs = usize::from(row.a);
    let (h_obs, w_obs) = net.forward(row.a, row.x, &mut caches[obs]);
    let (mut loss, d_h, d_w) = observed_terms(div, row.phi, row.eta[obs], h_obs, w_obs, settings.barrier_weight);
    let mut d_h_arm = [0.0; 2];
    d_h_arm[obs] = d_h;
    if settings.debias {
        let other = 1 - obs;
        let (h_other, _) = net.forward(other as u8, row.x, &mut caches[other]);
        let mut h = [0.0; 2];
        h[obs] = h_obs;
        h[other] = h_other;
        let (c, dc) = correction(row, h);
        loss += c;
        d_h_arm[0] += dc[0];
        d_h_arm[1] += dc[1];
        if let Some(g) = grad {
            net.backward(&caches[obs], d_h_arm[obs], d_w, g, scratch);
            net.backward(&caches[other], d_h_arm[other], 0.0, g, scratch);
        }
    } else if let Some(g) = grad {
        net.backward(&caches[obs], d_h_arm[obs], d_w, g, scratch);
    }
    loss
}
