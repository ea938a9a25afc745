//! Scalar dual program on a finite law.
//!
//! With `w = u + lambda t0` (`t0` the conjugate's neutral point) the objective
//! `lambda eta + u + lambda E[g*((phi - u)/lambda)]` becomes
//! `E[phi] + lambda eta + lambda E[psi((phi - w)/lambda)]`, where
//! `psi(r) = g*(t0 + r) - t0 - r` is convex, non-negative and flat at zero.
//! The shifted form has no cancellation when `lambda` is large.

use serde::{Deserialize, Serialize};

use crate::divergence::Divergence;
use crate::error::{Error, Result};
use crate::oracles::DiscreteLaw;
use crate::Direction;

/// Right end of the `psi` domain, `sup dom g* - t0`.
pub(crate) fn psi_sup(div: Divergence) -> f64 {
    div.domain_sup() - div.neutral_point()
}

/// `g*(t0 + r) - t0 - r`, `+inf` outside the domain.
pub(crate) fn psi(div: Divergence, r: f64) -> f64 {
    let sup = psi_sup(div);
    if r > sup || (r == sup && !div.domain_closed()) {
        return f64::INFINITY;
    }
    match div {
        Divergence::Kl => -(-r).ln_1p() - r,
        Divergence::Hellinger => 2.0 * r * r / (1.0 - 2.0 * r),
        Divergence::ChiSq => r * r / ((1.0 - r) + (1.0 - 2.0 * r).sqrt()),
        Divergence::Tv => (-0.5 - r).max(0.0),
        Divergence::Js => -0.5 * (-(2.0 * r).exp_m1()).ln_1p() - r,
    }
}

/// `psi'(r) = g*'(t0 + r) - 1`.
pub(crate) fn psi_d1(div: Divergence, r: f64) -> f64 {
    if r >= psi_sup(div) {
        return f64::INFINITY;
    }
    match div {
        Divergence::Kl => r / (1.0 - r),
        Divergence::Hellinger => {
            let q = 1.0 - 2.0 * r;
            (1.0 - q * q) / (q * q)
        }
        Divergence::ChiSq => 1.0 / (1.0 - 2.0 * r).sqrt() - 1.0,
        Divergence::Tv => {
            if r < -0.5 {
                -1.0
            } else {
                0.0
            }
        }
        Divergence::Js => {
            let e = (2.0 * r).exp_m1();
            2.0 * e / (1.0 - e)
        }
    }
}

/// `psi''(r) = g*''(t0 + r)`.
pub(crate) fn psi_d2(div: Divergence, r: f64) -> f64 {
    if r >= psi_sup(div) {
        return f64::INFINITY;
    }
    match div {
        Divergence::Kl => 1.0 / ((1.0 - r) * (1.0 - r)),
        Divergence::Hellinger => 4.0 / (1.0 - 2.0 * r).powi(3),
        Divergence::ChiSq => (1.0 - 2.0 * r).powf(-1.5),
        Divergence::Tv => 0.0,
        Divergence::Js => {
            let x = (2.0 * r).exp();
            4.0 * x / ((2.0 - x) * (2.0 - x))
        }
    }
}

/// Optimum of the dual program.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualSolution {
    pub value: f64,
    pub lambda: f64,
    /// Location multiplier in the unshifted parameterisation.
    pub u: f64,
}

/// Minimises the dual objective for the upper bound of `E_Q[phi]`.
pub fn dual_value_minimize<F: Fn(f64) -> f64>(law: &DiscreteLaw, phi: F, div: Divergence, eta: f64) -> Result<DualSolution> {
    let values: Vec<f64> = law.support().iter().map(|&y| phi(y)).collect();
    dual_on_values(law.probs(), &values, div, eta)
}

/// Dual bound in either direction; the lower bound negates `phi`.
pub fn dual_bound(probs: &[f64], values: &[f64], div: Divergence, eta: f64, direction: Direction) -> Result<DualSolution> {
    match direction {
        Direction::Upper => dual_on_values(probs, values, div, eta),
        Direction::Lower => {
            let neg: Vec<f64> = values.iter().map(|v| -v).collect();
            let s = dual_on_values(probs, &neg, div, eta)?;
            Ok(DualSolution { value: -s.value, lambda: s.lambda, u: s.u })
        }
    }
}

/// Upper-bound dual on a weighted finite set of `phi` values.
pub fn dual_on_values(probs: &[f64], values: &[f64], div: Divergence, eta: f64) -> Result<DualSolution> {
    if !(eta >= 0.0) || !eta.is_finite() {
        return Err(Error::Domain(format!("radius must be finite and non-negative, got {eta}")));
    }
    if probs.len() != values.len() || probs.is_empty() {
        return Err(Error::Invalid("probabilities and values must be non-empty and aligned".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("phi values must be finite".into()));
    }
    if probs.iter().any(|&p| !(p >= 0.0)) {
        return Err(Error::Invalid("probabilities must be non-negative".into()));
    }
    // atoms without mass must not constrain the conjugate domain
    let (probs, values): (Vec<f64>, Vec<f64>) = probs.iter().zip(values).filter(|(&p, _)| p > 0.0).map(|(&p, &v)| (p, v)).unzip();
    let total: f64 = probs.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Invalid("law has no mass".into()));
    }
    let problem = Problem::new(div, &probs, &values, total);
    let t0 = div.neutral_point();
    let scale = problem.scale;
    if scale == 0.0 {
        // point mass: the constraint E[s] = 1 pins the value and the multiplier vanishes
        let lambda = 1e-12 * problem.vmax.abs().max(1.0);
        return Ok(DualSolution { value: problem.vmax, lambda, u: problem.vmax - lambda * t0 });
    }
    let h_lo = scale.ln() - 30.0;
    let h_hi = scale.ln() + 30.0;
    if eta == 0.0 {
        let lambda = h_hi.exp();
        let w = problem.inner(lambda)?;
        return Ok(DualSolution { value: problem.mean, lambda, u: w - lambda * t0 });
    }
    let outer = |h: f64| {
        let lambda = h.exp();
        problem.profile(lambda).map(|(v, _)| v + lambda * eta).unwrap_or(f64::INFINITY)
    };
    let (h, _) = brent_minimize(outer, h_lo, h_hi, 1e-11);
    let lambda = h.exp();
    let (value, w) = problem.profile(lambda)?;
    Ok(DualSolution { value: value + lambda * eta, lambda, u: w - lambda * t0 })
}

struct Problem<'a> {
    div: Divergence,
    probs: &'a [f64],
    values: &'a [f64],
    total: f64,
    vmax: f64,
    mean: f64,
    scale: f64,
}

impl<'a> Problem<'a> {
    fn new(div: Divergence, probs: &'a [f64], values: &'a [f64], total: f64) -> Self {
        let vmax = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let vmin = values.iter().copied().fold(f64::INFINITY, f64::min);
        let mean = probs.iter().zip(values).map(|(p, v)| p * v).sum::<f64>() / total;
        Problem { div, probs, values, total, vmax, mean, scale: vmax - vmin }
    }

    /// `lambda E[psi((phi - w)/lambda)]` with `w = w_lo + delta`.
    fn penalty(&self, lambda: f64, delta: f64) -> f64 {
        let sup = psi_sup(self.div);
        let mut acc = 0.0;
        for (&p, &v) in self.probs.iter().zip(self.values) {
            let r = sup - ((self.vmax - v) + delta) / lambda;
            acc += p * psi(self.div, r);
        }
        lambda * acc / self.total
    }

    /// `d/d delta` of the penalty, increasing in `delta`.
    fn slope(&self, lambda: f64, delta: f64) -> (f64, f64) {
        let sup = psi_sup(self.div);
        let (mut d1, mut d2) = (0.0, 0.0);
        for (&p, &v) in self.probs.iter().zip(self.values) {
            let r = sup - ((self.vmax - v) + delta) / lambda;
            d1 += p * psi_d1(self.div, r);
            d2 += p * psi_d2(self.div, r);
        }
        (-d1 / self.total, d2 / (lambda * self.total))
    }

    /// Minimising offset `delta >= 0` for fixed `lambda`.
    fn inner_delta(&self, lambda: f64) -> Result<f64> {
        let (g0, _) = self.slope(lambda, 0.0);
        if g0 >= 0.0 {
            // only reachable with a closed domain: the minimum sits on the boundary
            return Ok(0.0);
        }
        let mut hi = lambda.min(self.scale).max(f64::MIN_POSITIVE);
        let mut iterations = 0;
        while self.slope(lambda, hi).0 < 0.0 {
            hi *= 2.0;
            iterations += 1;
            if iterations > 2000 || !hi.is_finite() {
                return Err(Error::Convergence {
                    iterations,
                    detail: format!("could not bracket the location multiplier at lambda = {lambda:e}"),
                });
            }
        }
        let mut lo = 0.0;
        let mut x = 0.5 * hi;
        for _ in 0..200 {
            let (g, gp) = self.slope(lambda, x);
            if g == 0.0 {
                return Ok(x);
            }
            if g < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let newton = x - g / gp;
            x = if newton.is_finite() && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if hi - lo <= 4.0 * f64::EPSILON * hi {
                break;
            }
        }
        Ok(x)
    }

    /// Optimal shifted location `w` for fixed `lambda`.
    fn inner(&self, lambda: f64) -> Result<f64> {
        let delta = self.inner_delta(lambda)?;
        Ok(self.vmax - lambda * psi_sup(self.div) + delta)
    }

    /// Profile value over `w` (without the radius term) and its minimiser.
    fn profile(&self, lambda: f64) -> Result<(f64, f64)> {
        let delta = self.inner_delta(lambda)?;
        let w = self.vmax - lambda * psi_sup(self.div) + delta;
        Ok((self.mean + self.penalty(lambda, delta), w))
    }
}

/// Brent's minimiser of a unimodal function on `[a, b]`.
pub(crate) fn brent_minimize<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    const GOLD: f64 = 0.381_966_011_250_105_1;
    let mut x = a + GOLD * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x);
    let (mut fw, mut fv) = (fx, fx);
    let (mut d, mut e) = (0.0f64, 0.0f64);
    for _ in 0..500 {
        let m = 0.5 * (a + b);
        let tol1 = tol * x.abs() + 1e-12;
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            if p.abs() < (0.5 * q * e).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if x < m { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= m { a - x } else { b - x };
            d = GOLD * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = f(u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, fx)
}
