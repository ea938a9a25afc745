use fdiv_bounds::experiment::duality_gap;
use fdiv_bounds::oracles::{binary_scm_grid, dpi_audit, primal_on_values, scm_ground_truth};
use fdiv_bounds::simulate::SyntheticScm;
use fdiv_bounds::{Direction, Divergence, Phi};
use proptest::prelude::*;

#[test]
fn radius_audit_over_the_full_grid() {
    let scms = binary_scm_grid(&[0.05, 0.275, 0.5, 0.725, 0.95]);
    assert!(scms.len() >= 500);
    for div in Divergence::ALL {
        let s = dpi_audit(div, &scms, 1.0, 1e-9).unwrap();
        assert_eq!(s.violations, 0, "{div}: {s:?}");
        assert!(s.min_slack >= -1e-9);
    }
}

#[test]
fn halved_radius_is_caught() {
    let scms = binary_scm_grid(&[0.05, 0.5, 0.95]);
    let caught = Divergence::ALL.iter().filter(|&&d| dpi_audit(d, &scms, 0.5, 1e-9).unwrap().violations > 0).count();
    // the radius is not tight for every divergence on a coarse grid, but some must break
    assert!(caught >= 1);
}

#[test]
fn duality_gap_over_random_instances() {
    for (i, div) in Divergence::ALL.into_iter().enumerate() {
        let radii = [0.01, 0.1, 0.5, div.radius(0.3).unwrap()];
        let (checks, gap) = duality_gap(div, 25, &radii, 100 + i as u64).unwrap();
        assert_eq!(checks, 100);
        assert!(gap <= 1e-4, "{div}: {gap:e}");
    }
}

#[test]
fn unconfounded_truth_matches_the_regression_within_3se() {
    let scm = SyntheticScm::default().unconfounded();
    let points = scm.evaluation_grid(5, 2);
    let truth = scm_ground_truth(&scm, 1, &points, &Phi::Identity, 20_000, 8).unwrap();
    for (x, t) in points.iter().zip(&truth) {
        let reg = scm.observational_mean(1, x);
        assert!((t.mean - reg).abs() < 3.0 * t.std_error, "{} vs {reg} (se {})", t.mean, t.std_error);
    }
}

#[test]
fn doubling_draws_halves_the_variance() {
    let scm = SyntheticScm::default();
    let points = scm.evaluation_grid(20, 3);
    let a = scm_ground_truth(&scm, 1, &points, &Phi::Identity, 20_000, 1).unwrap();
    let b = scm_ground_truth(&scm, 1, &points, &Phi::Identity, 40_000, 1).unwrap();
    // heavy-tailed noise makes single standard errors noisy; compare pooled variances
    let va: f64 = a.iter().map(|g| g.std_error.powi(2)).sum();
    let vb: f64 = b.iter().map(|g| g.std_error.powi(2)).sum();
    let ratio = vb / va;
    assert!((ratio - 0.5).abs() < 0.1, "ratio {ratio}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn observational_mean_lies_between_primal_bounds(
        w in prop::collection::vec(0.05f64..1.0, 2..8),
        seed_values in prop::collection::vec(-3.0f64..3.0, 8),
        eta in 0.0f64..1.0,
        k in 0usize..5,
    ) {
        let total: f64 = w.iter().sum();
        let probs: Vec<f64> = w.iter().map(|v| v / total).collect();
        let values = &seed_values[..probs.len()];
        let mean: f64 = probs.iter().zip(values).map(|(p, v)| p * v).sum();
        let div = Divergence::ALL[k];
        let up = primal_on_values(&probs, values, div, eta, Direction::Upper).unwrap();
        let lo = primal_on_values(&probs, values, div, eta, Direction::Lower).unwrap();
        prop_assert!(lo <= mean + 1e-9 && mean <= up + 1e-9);
    }

    #[test]
    fn primal_upper_bound_grows_with_the_radius(
        w in prop::collection::vec(0.05f64..1.0, 2..6),
        e1 in 0.0f64..1.0,
        e2 in 0.0f64..1.0,
        k in 0usize..5,
    ) {
        let total: f64 = w.iter().sum();
        let probs: Vec<f64> = w.iter().map(|v| v / total).collect();
        let values: Vec<f64> = (0..probs.len()).map(|i| i as f64).collect();
        let div = Divergence::ALL[k];
        let (small, large) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
        let a = primal_on_values(&probs, &values, div, small, Direction::Upper).unwrap();
        let b = primal_on_values(&probs, &values, div, large, Direction::Upper).unwrap();
        prop_assert!(a <= b + 1e-9);
    }
}
