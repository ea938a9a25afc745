//! Helpers shared by the integration suites and the acceptance runner.
#![allow(dead_code)]

use fdiv_bounds::aggregate::{k_agg, BoundFamily};
use fdiv_bounds::dual::network::DualNetwork;
use fdiv_bounds::dual::{row_loss, LossSettings, RowInput};
use fdiv_bounds::Divergence;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Largest relative error between the analytic loss gradient and a central
/// difference, over `probes` random networks, rows and directions.
pub fn gradient_probe(div: Divergence, probes: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = 3;
    let mut worst: f64 = 0.0;
    for probe in 0..probes {
        let mut net = DualNetwork::new(vec![0.0; d], vec![1.0; d], 16, 20.0, [0.2, -0.3], [0.5, 1.0], probe as u64);
        for p in net.params_mut() {
            *p += rng.random_range(-0.3..0.3);
        }
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let e1: f64 = rng.random_range(0.05..0.95);
        let e = [1.0 - e1, e1];
        let eta = [div.radius(e[0]).unwrap(), div.radius(e[1]).unwrap()];
        let eta_prime = [div.radius_derivative(e[0]).unwrap(), div.radius_derivative(e[1]).unwrap()];
        let row = RowInput { x: &x, a: u8::from(rng.random::<bool>()), phi: rng.random_range(-1.5..1.5), e, eta, eta_prime };
        let settings = LossSettings { debias: rng.random::<bool>(), barrier_weight: 10.0 };
        let mut caches = [net.new_cache(), net.new_cache()];
        let mut scratch = Vec::new();
        let mut grad = vec![0.0; net.n_params()];
        row_loss(&net, div, &row, settings, Some(&mut grad), &mut caches, &mut scratch);
        let dir: Vec<f64> = (0..net.n_params()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let analytic: f64 = grad.iter().zip(&dir).map(|(g, v)| g * v).sum();
        let step = 1e-6;
        let mut at = |sign: f64| {
            let mut moved = net.clone();
            for (p, v) in moved.params_mut().iter_mut().zip(&dir) {
                *p += sign * step * v;
            }
            row_loss(&moved, div, &row, settings, None, &mut caches, &mut scratch)
        };
        let numeric = (at(1.0) - at(-1.0)) / (2.0 * step);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0);
        worst = worst.max(rel);
    }
    worst
}

/// One-sided sign-test p-value `Pr(Bin(n, 1/2) >= wins)`.
pub fn sign_test_p(wins: usize, n: usize) -> f64 {
    let mut p = 0.0;
    let mut c = 1.0f64;
    for k in 0..=n {
        if k > 0 {
            c = c * (n - k + 1) as f64 / k as f64;
        }
        if k >= wins {
            p += c;
        }
    }
    p / 2f64.powi(n as i32)
}

/// Least-squares slope of `y` on `x`.
pub fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Every list of length 1..=5 with entries in 1..=5.
pub fn all_lists() -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for len in 1..=5u32 {
        for code in 0..5usize.pow(len) {
            let mut c = code;
            let list = (0..len)
                .map(|_| {
                    let v = (c % 5 + 1) as f64;
                    c /= 5;
                    v
                })
                .collect();
            out.push(list);
        }
    }
    out
}

/// Counts the families violating the order-statistic characterisation of
/// both aggregated endpoints.
pub fn characterisation_counterexamples() -> (usize, usize) {
    let mut checked = 0;
    let mut bad = 0;
    for list in all_lists() {
        let n = list.len();
        // the same list serves as lowers and uppers; the endpoints are computed independently
        let fam = BoundFamily::unlabelled(list.clone(), list.clone()).unwrap();
        for k in 1..=n {
            let (lo, up) = k_agg(&fam, k).unwrap();
            for theta in 0..=6 {
                let theta = theta as f64;
                let below = list.iter().filter(|&&v| v <= theta).count();
                let above = list.iter().filter(|&&v| v >= theta).count();
                if (lo <= theta) != (below >= n - k + 1) {
                    bad += 1;
                }
                if (up >= theta) != (above >= n - k + 1) {
                    bad += 1;
                }
                checked += 2;
            }
        }
    }
    (checked, bad)
}
