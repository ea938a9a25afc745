//! Direct solves of `sup_s E_P[s phi]` subject to `E_P[s] = 1`, `E_P[g(s)] <= eta`.
//!
//! The stationarity condition `phi_i = mu g'(s_i) + nu` is inverted numerically
//! from `g'` and `g''` alone, so the solve shares nothing with the conjugate
//! formulas used by the dual path.

use super::law::DiscreteLaw;
use crate::divergence::Divergence;
use crate::error::{Error, Result};
use crate::Direction;

const MAX_SUPPORT: usize = 50;
const BISECTION_STEPS: usize = 200;

pub fn primal_oracle<F: Fn(f64) -> f64>(
    law: &DiscreteLaw,
    phi: F,
    div: Divergence,
    eta: f64,
    direction: Direction,
) -> Result<f64> {
    if law.len() > MAX_SUPPORT {
        return Err(Error::Invalid(format!("primal oracle supports at most {MAX_SUPPORT} atoms, got {}", law.len())));
    }
    let values: Vec<f64> = law.support().iter().map(|&y| phi(y)).collect();
    primal_on_values(law.probs(), &values, div, eta, direction)
}

/// Same as [`primal_oracle`] with `phi` already applied to the support.
pub fn primal_on_values(probs: &[f64], values: &[f64], div: Divergence, eta: f64, direction: Direction) -> Result<f64> {
    match direction {
        Direction::Upper => primal_upper(probs, values, div, eta),
        Direction::Lower => {
            let neg: Vec<f64> = values.iter().map(|v| -v).collect();
            primal_upper(probs, &neg, div, eta).map(|v| -v)
        }
    }
}

fn primal_upper(probs: &[f64], values: &[f64], div: Divergence, eta: f64) -> Result<f64> {
    if !(eta >= 0.0) {
        return Err(Error::Domain(format!("radius must be non-negative, got {eta}")));
    }
    if probs.len() != values.len() || probs.is_empty() {
        return Err(Error::Invalid("probabilities and values must be non-empty and aligned".into()));
    }
    // atoms without mass cannot be reweighted
    let (p, v): (Vec<f64>, Vec<f64>) = probs.iter().zip(values).filter(|(&p, _)| p > 0.0).map(|(&p, &v)| (p, v)).unzip();
    let mean: f64 = p.iter().zip(&v).map(|(p, v)| p * v).sum();
    let vmax = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let p_top: f64 = p.iter().zip(&v).filter(|(_, &x)| x == vmax).map(|(p, _)| p).sum();
    if eta == 0.0 || p_top >= 1.0 - 1e-15 {
        return Ok(mean);
    }
    if div == Divergence::Tv {
        return Ok(tv_greedy(&p, &v, eta));
    }
    let d_top = p_top * div.g(1.0 / p_top) + (1.0 - p_top) * div.g(0.0);
    if eta >= d_top {
        return Ok(vmax);
    }

    let scale = vmax - v.iter().copied().fold(f64::INFINITY, f64::min);
    let solver = KktSolver { div, p: &p, v: &v, vmax };

    // D(mu) decreases from d_top (mu -> 0) to 0 (mu -> inf)
    let mut lo = (scale).ln();
    let mut hi = lo;
    while solver.divergence_at(lo.exp())?.1 <= eta {
        lo -= 2.0;
        if lo < -700.0 {
            return Ok(vmax);
        }
    }
    while solver.divergence_at(hi.exp())?.1 > eta {
        hi += 2.0;
        if hi > 700.0 {
            return Ok(mean);
        }
    }
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if solver.divergence_at(mid.exp())?.1 > eta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (s, d) = solver.divergence_at(hi.exp())?;
    let mass: f64 = p.iter().zip(&s).map(|(p, s)| p * s).sum();
    let mass_residual = (mass - 1.0).abs();
    let div_residual = d - eta;
    if mass_residual > 1e-9 || div_residual > 1e-9 * eta.max(1.0) || div_residual < -1e-6 * eta.max(1.0) {
        return Err(Error::Convergence {
            iterations: BISECTION_STEPS,
            detail: format!("primal residuals: mass {mass_residual:.3e}, divergence {div_residual:.3e}"),
        });
    }
    Ok(p.iter().zip(&s).zip(&v).map(|((p, s), v)| p * s * v).sum::<f64>() / mass)
}

/// Moves `min(eta, 1 - p_top)` mass from the lowest atoms to the top value.
fn tv_greedy(p: &[f64], v: &[f64], eta: f64) -> f64 {
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let vmax = v[order[order.len() - 1]];
    let mean: f64 = p.iter().zip(v).map(|(p, v)| p * v).sum();
    let p_top: f64 = p.iter().zip(v).filter(|(_, &x)| x == vmax).map(|(p, _)| p).sum();
    let mut remaining = eta.min(1.0 - p_top);
    let mut value = mean;
    for &i in &order {
        if remaining <= 0.0 || v[i] == vmax {
            break;
        }
        let moved = remaining.min(p[i]);
        value += moved * (vmax - v[i]);
        remaining -= moved;
    }
    value
}

struct KktSolver<'a> {
    div: Divergence,
    p: &'a [f64],
    v: &'a [f64],
    vmax: f64,
}

impl KktSolver<'_> {
    /// Weights `s(mu)` normalised through the mass multiplier, and `E_P[g(s)]`.
    fn divergence_at(&self, mu: f64) -> Result<(Vec<f64>, f64)> {
        let sup = self.div.domain_sup();
        // s_top -> inf as nu -> vmax - mu sup; s <= 1 everywhere at nu = vmax - mu g'(1)
        let mut lo = self.vmax - mu * sup;
        let mut hi = self.vmax - mu * self.div.g_prime(1.0);
        let mut s = vec![0.0; self.p.len()];
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.mass(mu, mid, &mut s) > 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mass = self.mass(mu, hi, &mut s);
        s.iter_mut().for_each(|x| *x /= mass);
        let d = self.p.iter().zip(&s).map(|(p, &s)| p * self.div.g(s)).sum();
        Ok((s, d))
    }

    fn mass(&self, mu: f64, nu: f64, s: &mut [f64]) -> f64 {
        let mut total = 0.0;
        for i in 0..self.p.len() {
            s[i] = invert_g_prime(self.div, (self.v[i] - nu) / mu);
            total += self.p[i] * s[i];
        }
        total
    }
}

/// Solves `g'(s) = target` for `s > 0` by safeguarded Newton in `ln s`.
fn invert_g_prime(div: Divergence, target: f64) -> f64 {
    if target >= div.domain_sup() {
        return f64::INFINITY;
    }
    let residual = |z: f64| div.g_prime(z.exp()) - target;
    let (mut lo, mut hi) = (-1.0, 1.0);
    while residual(lo) > 0.0 {
        lo *= 2.0;
        if lo < -745.0 {
            return 0.0;
        }
    }
    while residual(hi) < 0.0 {
        hi *= 2.0;
        if hi > 709.0 {
            return f64::INFINITY;
        }
    }
    let mut z = 0.5 * (lo + hi);
    for _ in 0..200 {
        let r = residual(z);
        if r == 0.0 {
            break;
        }
        if r > 0.0 {
            hi = z;
        } else {
            lo = z;
        }
        let s = z.exp();
        let slope = div.g_second(s) * s;
        let newton = z - r / slope;
        z = if newton.is_finite() && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo < 1e-15 * (1.0 + z.abs()) {
            break;
        }
    }
    z.exp()
}

/// Two-atom solve by dense grid search plus bisection; validates the KKT path.
pub fn two_point_primal(p0: f64, v0: f64, v1: f64, div: Divergence, eta: f64) -> Result<f64> {
    if !(p0 > 0.0 && p0 < 1.0) {
        return Err(Error::Domain(format!("two-point mass must lie in (0, 1), got {p0}")));
    }
    if !(eta >= 0.0) {
        return Err(Error::Domain(format!("radius must be non-negative, got {eta}")));
    }
    // orient so that atom 1 carries the larger value
    let (p0, v0, v1) = if v1 >= v0 { (p0, v0, v1) } else { (1.0 - p0, v1, v0) };
    let p1 = 1.0 - p0;
    let value = |s1: f64| {
        let s0 = (1.0 - p1 * s1) / p0;
        p0 * s0 * v0 + p1 * s1 * v1
    };
    let cost = |s1: f64| {
        let s0 = ((1.0 - p1 * s1) / p0).max(0.0);
        p0 * div.g(s0) + p1 * div.g(s1)
    };
    let top = 1.0 / p1;
    if cost(top) <= eta {
        return Ok(v1);
    }
    const GRID: usize = 10_000;
    let at = |k: usize| 1.0 + (top - 1.0) * k as f64 / GRID as f64;
    let last = (0..=GRID).take_while(|&k| cost(at(k)) <= eta).last().unwrap_or(0);
    let (mut lo, mut hi) = (at(last), at(last + 1));
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if cost(mid) <= eta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(value(lo))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coin() -> DiscreteLaw {
        DiscreteLaw::new(vec![0.0, 1.0], vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn chi_square_two_point_golden() {
        // s1 = 1 + 1/sqrt(2), value s1 / 2
        let expected = (1.0 + 1.0 / 2f64.sqrt()) / 2.0;
        let up = primal_oracle(&coin(), |y| y, Divergence::ChiSq, 0.5, Direction::Upper).unwrap();
        let lo = primal_oracle(&coin(), |y| y, Divergence::ChiSq, 0.5, Direction::Lower).unwrap();
        assert!((up - expected).abs() < 1e-9, "{up}");
        assert!((lo - (1.0 - expected)).abs() < 1e-9, "{lo}");
        assert!((up - 0.853_553_4).abs() < 1e-7);
        assert!((lo - 0.146_446_6).abs() < 1e-7);
    }

    #[test]
    fn zero_radius_is_the_mean() {
        let law = DiscreteLaw::new(vec![1.0, 2.0, 5.0], vec![0.2, 0.3, 0.5]).unwrap();
        for div in Divergence::ALL {
            let v = primal_oracle(&law, |y| y, div, 0.0, Direction::Upper).unwrap();
            assert!((v - 3.3).abs() < 1e-12);
        }
    }

    #[test]
    fn negative_radius_rejected() {
        assert!(primal_oracle(&coin(), |y| y, Divergence::Kl, -0.1, Direction::Upper).is_err());
    }

    #[test]
    fn kkt_agrees_with_grid_search() {
        for div in Divergence::ALL {
            for &(p0, eta) in &[(0.5, 0.05), (0.3, 0.2), (0.8, 0.5), (0.1, 0.01)] {
                let law = DiscreteLaw::new(vec![-1.0, 2.0], vec![p0, 1.0 - p0]).unwrap();
                let kkt = primal_oracle(&law, |y| y, div, eta, Direction::Upper).unwrap();
                let grid = two_point_primal(p0, -1.0, 2.0, div, eta).unwrap();
                assert!((kkt - grid).abs() < 1e-7, "{div} p0={p0} eta={eta}: {kkt} vs {grid}");
            }
        }
    }

    #[test]
    fn large_radius_reaches_the_top_atom() {
        let law = DiscreteLaw::new(vec![0.0, 1.0, 3.0], vec![0.4, 0.4, 0.2]).unwrap();
        for div in [Divergence::Hellinger, Divergence::Tv, Divergence::Js] {
            let v = primal_oracle(&law, |y| y, div, 10.0, Direction::Upper).unwrap();
            assert!((v - 3.0).abs() < 1e-12, "{div}: {v}");
        }
    }

    #[test]
    fn tv_moves_mass_greedily() {
        let law = DiscreteLaw::new(vec![0.0, 1.0, 2.0], vec![0.3, 0.3, 0.4]).unwrap();
        // 0.3 mass from y=0 and 0.1 from y=1 move to y=2
        let v = primal_oracle(&law, |y| y, Divergence::Tv, 0.4, Direction::Upper).unwrap();
        assert!((v - (1.1 + 0.3 * 2.0 + 0.1)).abs() < 1e-12);
    }
}
