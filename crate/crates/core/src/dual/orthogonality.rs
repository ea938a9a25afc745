//! Finite-difference sensitivity of the empirical risks to the propensity.

use super::loss::{correction, observed_terms, RowInput, Standardisation};
use super::network::DualNetwork;
use crate::data::Dataset;
use crate::divergence::Divergence;
use crate::error::{Error, Result};
use crate::nuisance::PropensityEstimate;
use crate::Direction;

/// Directional derivatives at `t = 0` of the debiased and plain empirical risks
/// along `e_a + t s_a` for each arm, averaged over the central differences at
/// the step sizes in `t_grid`.
pub fn orthogonality_probe(
    data: &Dataset,
    net: &DualNetwork,
    standardisation: Standardisation,
    prop: &PropensityEstimate,
    div: Divergence,
    direction: Direction,
    perturbation: [&dyn Fn(&[f64]) -> f64; 2],
    t_grid: &[f64],
) -> Result<(f64, f64)> {
    if t_grid.is_empty() || t_grid.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::Invalid("finite-difference steps must be positive".into()));
    }
    let n = data.n();
    let phi = data.phi_values();
    let sign = direction.sign();
    // per-row network outputs and propensities do not depend on t
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let x = data.row(i);
        let (h0, w0) = net.eval(0, x);
        let (h1, w1) = net.eval(1, x);
        let e1 = prop.e1(x);
        let s = [perturbation[0](x), perturbation[1](x)];
        rows.push(([h0, h1], [w0, w1], [1.0 - e1, e1], s));
    }
    let risks = |t: f64| -> Result<(f64, f64)> {
        let (mut plain, mut debiased) = (0.0, 0.0);
        for (i, (h, w, e, s)) in rows.iter().enumerate() {
            let et = [e[0] + t * s[0], e[1] + t * s[1]];
            if et.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
                return Err(Error::Domain(format!("perturbed propensity leaves (0, 1) at row {i}")));
            }
            let a = data.treatments()[i];
            let arm = usize::from(a);
            let eta = [div.radius(et[0])?, div.radius(et[1])?];
            let eta_prime = [div.radius_derivative(et[0])?, div.radius_derivative(et[1])?];
            let y = standardisation.to_std(sign * phi[i]);
            let (loss, _, _) = observed_terms(div, y, eta[arm], h[arm], w[arm], 0.0);
            let row = RowInput { x: &[], a, phi: y, e: et, eta, eta_prime };
            let (c, _) = correction(&row, *h);
            plain += loss;
            debiased += loss + c;
        }
        Ok((debiased / n as f64, plain / n as f64))
    };
    let (mut d_deb, mut d_plain) = (0.0, 0.0);
    for &t in t_grid {
        let (dp, pp) = risks(t)?;
        let (dm, pm) = risks(-t)?;
        d_deb += (dp - dm) / (2.0 * t);
        d_plain += (pp - pm) / (2.0 * t);
    }
    let k = t_grid.len() as f64;
    Ok((d_deb / k, d_plain / k))
}
