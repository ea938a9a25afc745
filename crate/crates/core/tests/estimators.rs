use fdiv_bounds::dual::{
    evaluate_bound, fit_conditional, fit_marginal, orthogonality_probe, split_folds, ConditionalConfig, PropensitySource,
};
use fdiv_bounds::nuisance::PropensityEstimate;
use fdiv_bounds::simulate::SyntheticScm;
use fdiv_bounds::{Dataset, Direction, Divergence, Error, Phi};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn negated(data: &Dataset) -> Dataset {
    let y = data.outcomes().iter().map(|v| -v).collect();
    Dataset::new(data.d(), data.covariates().to_vec(), data.treatments().to_vec(), y, Phi::Identity).unwrap()
}

fn quick() -> ConditionalConfig {
    let mut cfg = ConditionalConfig::default();
    cfg.optim.epochs = 40;
    cfg
}

#[test]
fn lower_bound_is_the_negated_upper_bound_of_the_negated_outcome() {
    let data = SyntheticScm::default().generate(1200, 1);
    let flipped = negated(&data);
    for div in Divergence::ALL {
        let lo = fit_marginal(&data, div, Direction::Lower, None).unwrap();
        let up = fit_marginal(&flipped, div, Direction::Upper, None).unwrap();
        for arm in 0..2 {
            assert_eq!(lo.arms[arm].theta, -up.arms[arm].theta, "{div}");
        }
    }
    let cfg = quick();
    let lo = fit_conditional(&data, Divergence::ChiSq, Direction::Lower, &cfg, 3).unwrap();
    let up = fit_conditional(&flipped, Divergence::ChiSq, Direction::Upper, &cfg, 3).unwrap();
    for x in data.rows().take(10) {
        let a = evaluate_bound(&lo, 1, x).unwrap().value;
        let b = evaluate_bound(&up, 1, x).unwrap().value;
        assert_eq!(a, -b);
    }
}

#[test]
fn reported_bound_is_the_fold_average() {
    let data = SyntheticScm::default().generate(1000, 2);
    let fit = fit_conditional(&data, Divergence::Kl, Direction::Upper, &quick(), 4).unwrap();
    for x in data.rows().take(20) {
        let est = evaluate_bound(&fit, 1, x).unwrap();
        assert_eq!(est.folds.len(), 2);
        let mean = est.folds.iter().map(|f| f.theta).sum::<f64>() / 2.0;
        assert!((est.value - mean).abs() < 1e-12);
        let lo = est.folds.iter().map(|f| f.theta).fold(f64::INFINITY, f64::min);
        let hi = est.folds.iter().map(|f| f.theta).fold(f64::NEG_INFINITY, f64::max);
        assert!(lo <= est.value && est.value <= hi);
        assert!(est.folds.iter().all(|f| f.theta.is_finite() && f.lambda > 0.0));
    }
}

#[test]
fn upper_bound_grows_with_an_overridden_radius() {
    let data = SyntheticScm::default().generate(1000, 3);
    for div in [Divergence::Hellinger, Divergence::Tv] {
        let fit = fit_conditional(&data, div, Direction::Upper, &quick(), 5).unwrap();
        let radii = [0.0, 0.01, 0.1, 0.3, 1.0];
        for x in data.rows().take(10) {
            let vals: Vec<f64> =
                radii.iter().map(|&r| evaluate_bound(&fit.clone().with_eta_override(Some(r)), 1, x).unwrap().value).collect();
            assert!(vals.windows(2).all(|w| w[0] <= w[1] + 1e-8), "{div}: {vals:?}");
        }
    }
}

#[test]
fn without_covariates_the_conditional_fit_matches_the_marginal_fit() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let n = 20_000;
    let a: Vec<u8> = (0..n).map(|_| u8::from(rng.random::<f64>() < 0.4)).collect();
    let y: Vec<f64> = a.iter().map(|&t| rng.random::<f64>() + 0.5 * f64::from(t)).collect();
    let data = Dataset::new(0, vec![], a, y, Phi::Identity).unwrap();
    for div in [Divergence::ChiSq, Divergence::Kl, Divergence::Tv] {
        let marginal = fit_marginal(&data, div, Direction::Upper, None).unwrap();
        let cond = fit_conditional(&data, div, Direction::Upper, &ConditionalConfig::default(), 7).unwrap();
        for arm in 0..2u8 {
            let c = evaluate_bound(&cond, arm, &[]).unwrap().value;
            let m = marginal.arms[usize::from(arm)].theta;
            assert!((c - m).abs() < 5e-3, "{div} arm {arm}: conditional {c} marginal {m}");
        }
    }
}

#[test]
fn best_validation_loss_is_monotone_and_stopping_honours_patience() {
    let data = SyntheticScm::default().generate(1500, 8);
    let cfg = ConditionalConfig::default();
    let fit = fit_conditional(&data, Divergence::Js, Direction::Upper, &cfg, 9).unwrap();
    for fold in &fit.folds {
        let h = &fold.history;
        let best = h.best_so_far();
        assert!(best.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(h.best_loss(), h.val_loss[h.best_epoch]);
        if h.stopped_early {
            assert_eq!(h.val_loss.len() - 1 - h.best_epoch, cfg.optim.patience);
        } else {
            assert_eq!(h.val_loss.len() - 1, cfg.optim.epochs);
        }
    }
}

#[test]
fn same_seed_gives_identical_fits() {
    let data = SyntheticScm::default().generate(800, 10);
    let a = fit_conditional(&data, Divergence::Hellinger, Direction::Upper, &quick(), 11).unwrap();
    let b = fit_conditional(&data, Divergence::Hellinger, Direction::Upper, &quick(), 11).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    let c = fit_conditional(&data, Divergence::Hellinger, Direction::Upper, &quick(), 12).unwrap();
    assert_ne!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&c).unwrap());
}

#[test]
fn debiasing_is_neutral_under_oracle_propensities() {
    let scm = SyntheticScm::default();
    let data = scm.generate(3000, 13).with_phi(Phi::Indicator { threshold: 1.0 }).unwrap();
    let grid = scm.evaluation_grid(50, 14);
    let oracle = PropensitySource::Fixed(PropensityEstimate::oracle(scm.clone(), 0.05));
    let run = |debias: bool, seed: u64| -> Vec<f64> {
        let cfg = ConditionalConfig { debias, source: oracle.clone(), ..ConditionalConfig::default() };
        let fit = fit_conditional(&data, Divergence::ChiSq, Direction::Upper, &cfg, seed).unwrap();
        grid.iter().map(|x| evaluate_bound(&fit, 1, x).unwrap().value).collect()
    };
    let mad = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64;
    let deb = run(true, 15);
    let plain = run(false, 15);
    let other_seed = run(true, 16);
    let spread = mad(&deb, &other_seed);
    let gap = mad(&deb, &plain);
    assert!(gap <= 3.0 * spread, "debias gap {gap} vs seed spread {spread}");
}

#[test]
fn orthogonality_probe_is_zero_without_perturbation_and_odd_in_direction() {
    let scm = SyntheticScm::default();
    let data = scm.generate(2000, 17);
    let fit = fit_conditional(&data, Divergence::Kl, Direction::Upper, &quick(), 18).unwrap();
    let fold = &fit.folds[0];
    let prop = PropensityEstimate::oracle(scm.clone(), 0.05);
    let zero = |_: &[f64]| 0.0;
    let (d, p) = orthogonality_probe(
        &data,
        &fold.net,
        fold.standardisation,
        &prop,
        Divergence::Kl,
        Direction::Upper,
        [&zero, &zero],
        &[1e-4],
    )
    .unwrap();
    assert_eq!((d, p), (0.0, 0.0));
    let s = |x: &[f64]| 0.5 * x[0].sin();
    let ms = |x: &[f64]| -0.5 * x[0].sin();
    let probe = |dir: [&dyn Fn(&[f64]) -> f64; 2]| {
        orthogonality_probe(&data, &fold.net, fold.standardisation, &prop, Divergence::Kl, Direction::Upper, dir, &[1e-4])
            .unwrap()
    };
    let (_, plus) = probe([&ms, &s]);
    let (_, minus) = probe([&s, &ms]);
    assert!(plus != 0.0);
    assert!((plus + minus).abs() < 1e-6 * plus.abs().max(1.0));
    let huge = |_: &[f64]| 100.0;
    assert!(orthogonality_probe(&data, &fold.net, fold.standardisation, &prop, Divergence::Kl, Direction::Upper, [&huge, &huge], &[0.1]).is_err());
}

#[test]
fn single_arm_fold_is_refused() {
    let n = 300;
    let mut a = vec![0u8; n];
    a[0] = 1;
    let data = Dataset::new(1, (0..n).map(|i| i as f64).collect(), a, vec![0.0; n], Phi::Identity).unwrap();
    assert!(matches!(split_folds(&data, 2, 0), Err(Error::SingleArmFold { .. })));
    assert!(fit_conditional(&data, Divergence::Kl, Direction::Upper, &ConditionalConfig::default(), 0).is_err());
}

#[test]
fn small_samples_are_refused() {
    let data = SyntheticScm::default().generate(150, 19);
    assert!(matches!(
        fit_conditional(&data, Divergence::Kl, Direction::Upper, &ConditionalConfig::default(), 0),
        Err(Error::Invalid(_))
    ));
}
