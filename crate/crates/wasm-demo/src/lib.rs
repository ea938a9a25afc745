//! Browser bindings: radius curves, a discrete bounds explorer and a
//! simulated marginal-bounds run. Each export returns a JSON string.

use fdiv_bounds::aggregate::{k_agg_auto, BoundFamily};
use fdiv_bounds::config::RunConfig;
use fdiv_bounds::dual::dual_bound;
use fdiv_bounds::experiment::{run_bounds, BoundsReport};
use fdiv_bounds::simulate::SyntheticScm;
use fdiv_bounds::{Direction, Divergence};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct Curve {
    divergence: &'static str,
    radius: Vec<f64>,
}

#[derive(Serialize)]
struct Curves {
    e: Vec<f64>,
    curves: Vec<Curve>,
}

/// `B_f(e)` for every divergence on `points` propensities in `[lo, 1]`.
pub fn radius_curves_json(points: usize, lo: f64) -> Result<String, String> {
    if points < 2 || !(lo > 0.0 && lo < 1.0) {
        return Err("need at least two points and a lower end in (0, 1)".into());
    }
    let e: Vec<f64> = (0..points).map(|i| lo + (1.0 - lo) * i as f64 / (points - 1) as f64).collect();
    let curves = Divergence::ALL
        .iter()
        .map(|&d| {
            let radius = e.iter().map(|&v| d.radius(v)).collect::<Result<_, _>>().map_err(|err| err.to_string())?;
            Ok(Curve { divergence: d.name(), radius })
        })
        .collect::<Result<_, String>>()?;
    serde_json::to_string(&Curves { e, curves }).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct DiscreteBound {
    divergence: &'static str,
    eta: f64,
    lo: f64,
    up: f64,
}

#[derive(Serialize)]
struct DiscreteReport {
    mean: f64,
    bounds: Vec<DiscreteBound>,
    tight_kth: fdiv_bounds::aggregate::Aggregate,
}

/// Bounds on the interventional mean of a discrete observational law whose
/// arm has propensity `e`. Weights need not be normalised.
pub fn discrete_bounds_json(values: &[f64], weights: &[f64], e: f64) -> Result<String, String> {
    if values.is_empty() || values.len() != weights.len() {
        return Err("values and weights must be non-empty and of equal length".into());
    }
    let total: f64 = weights.iter().sum();
    if weights.iter().any(|&w| !(w >= 0.0)) || !(total > 0.0) {
        return Err("weights must be non-negative with a positive sum".into());
    }
    let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let mean = probs.iter().zip(values).map(|(p, v)| p * v).sum();
    let mut bounds = Vec::with_capacity(Divergence::ALL.len());
    for d in Divergence::ALL {
        let eta = d.radius(e).map_err(|err| err.to_string())?;
        let up = dual_bound(&probs, values, d, eta, Direction::Upper).map_err(|err| err.to_string())?.value;
        let lo = dual_bound(&probs, values, d, eta, Direction::Lower).map_err(|err| err.to_string())?.value;
        bounds.push(DiscreteBound { divergence: d.name(), eta, lo, up });
    }
    let family = BoundFamily::new(
        bounds.iter().map(|b| b.lo).collect(),
        bounds.iter().map(|b| b.up).collect(),
        bounds.iter().map(|b| b.divergence.to_string()).collect(),
    )
    .map_err(|err| err.to_string())?;
    let tight_kth = k_agg_auto(&family);
    serde_json::to_string(&DiscreteReport { mean, bounds, tight_kth }).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct SimulationReport {
    report: BoundsReport,
    /// Interventional arm means averaged over the sampled covariates.
    truth: [f64; 2],
}

/// Draws `n` rows from the synthetic confounded model and reports marginal bounds.
pub fn simulate_marginal_json(n: usize, seed: u64) -> Result<String, String> {
    if n < 20 {
        return Err("need at least 20 rows".into());
    }
    let scm = SyntheticScm::default();
    let data = scm.generate(n, seed);
    let report = run_bounds(&data, &RunConfig { seed, ..RunConfig::default() }).map_err(|e| e.to_string())?;
    let mut truth = [0.0; 2];
    for (a, t) in truth.iter_mut().enumerate() {
        *t = data.rows().map(|x| scm.interventional_mean(a as u8, x)).sum::<f64>() / n as f64;
    }
    serde_json::to_string(&SimulationReport { report, truth }).map_err(|e| e.to_string())
}

fn js(r: Result<String, String>) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn radius_curves(points: usize, lo: f64) -> Result<String, JsValue> {
    js(radius_curves_json(points, lo))
}

#[wasm_bindgen]
pub fn discrete_bounds(values: Vec<f64>, weights: Vec<f64>, e: f64) -> Result<String, JsValue> {
    js(discrete_bounds_json(&values, &weights, e))
}

#[wasm_bindgen]
pub fn simulate_marginal(n: usize, seed: u32) -> Result<String, JsValue> {
    js(simulate_marginal_json(n, u64::from(seed)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn curves_end_at_zero() {
        let v: Value = serde_json::from_str(&radius_curves_json(11, 0.05).unwrap()).unwrap();
        assert_eq!(v["curves"].as_array().unwrap().len(), 5);
        for c in v["curves"].as_array().unwrap() {
            let r = c["radius"].as_array().unwrap();
            assert_eq!(r.len(), 11);
            assert!(r.last().unwrap().as_f64().unwrap().abs() < 1e-12);
        }
        assert!(radius_curves_json(1, 0.05).is_err());
    }

    #[test]
    fn discrete_bounds_bracket_the_mean() {
        let v: Value = serde_json::from_str(&discrete_bounds_json(&[0.0, 1.0, 3.0], &[1.0, 2.0, 1.0], 0.4).unwrap()).unwrap();
        let mean = v["mean"].as_f64().unwrap();
        assert!((mean - 1.25).abs() < 1e-12);
        for b in v["bounds"].as_array().unwrap() {
            let (lo, up) = (b["lo"].as_f64().unwrap(), b["up"].as_f64().unwrap());
            assert!(lo <= mean + 1e-9 && mean <= up + 1e-9);
            assert!(lo >= -1e-9 && up <= 3.0 + 1e-9);
        }
        assert!(discrete_bounds_json(&[1.0], &[-1.0], 0.5).is_err());
    }

    #[test]
    fn simulation_reports_both_arms() {
        let v: Value = serde_json::from_str(&simulate_marginal_json(500, 1).unwrap()).unwrap();
        assert_eq!(v["report"]["body"]["arms"].as_array().unwrap().len(), 2);
        assert!(v["truth"][1].as_f64().unwrap().is_finite());
    }
}
