//! Cross-fitted conditional bounds with a dual network per fold.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{Standardisation, EDGE_MARGIN, PROJECTION_MARGIN};
use super::network::DualNetwork;
use super::solve::{dual_on_values, psi, psi_d1, psi_sup};
use super::train::{train, TrainHistory, TrainSet};
use crate::config::OptimConfig;
use crate::data::Dataset;
use crate::divergence::Divergence;
use crate::error::{Error, Result};
use crate::nuisance::{fit_propensity, fit_pseudo_outcome, NoiseScale, PropensityConfig, PropensityEstimate, PseudoConfig, PseudoOutcomeRegressor};
use crate::simulate::inject_propensity_noise;
use crate::Direction;

/// Where each fold's propensity comes from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub enum PropensitySource {
    /// Fitted on the complementary folds.
    #[default]
    Fit,
    /// Supplied by the caller, e.g. an oracle.
    Fixed(PropensityEstimate),
    /// Fitted, then perturbed with `N(n^{-1/4}, n^{-1/4})` noise.
    FitWithNoise { scale: NoiseScale, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionalConfig {
    pub folds: usize,
    pub debias: bool,
    pub optim: OptimConfig,
    pub propensity: PropensityConfig,
    pub pseudo: PseudoConfig,
    pub source: PropensitySource,
    /// Replaces the propensity-driven radius everywhere, in training and evaluation.
    pub eta_override: Option<f64>,
}

impl Default for ConditionalConfig {
    fn default() -> Self {
        ConditionalConfig {
            folds: 2,
            debias: true,
            optim: OptimConfig::default(),
            propensity: PropensityConfig::default(),
            pseudo: PseudoConfig::default(),
            source: PropensitySource::Fit,
            eta_override: None,
        }
    }
}

/// Everything fitted for one evaluation fold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldFit {
    pub net: DualNetwork,
    pub propensity: PropensityEstimate,
    pub pseudo: PseudoOutcomeRegressor,
    pub standardisation: Standardisation,
    pub history: TrainHistory,
    /// Indices of the rows of the full dataset in this fold.
    pub rows: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionalFit {
    pub divergence: Divergence,
    pub direction: Direction,
    pub eta_override: Option<f64>,
    pub folds: Vec<FoldFit>,
    /// Per-covariate `(min, max)` of the training data.
    pub hull: Vec<(f64, f64)>,
}

/// Per-fold ingredients of a bound at one query point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldValue {
    pub theta: f64,
    pub e_hat: f64,
    pub eta: f64,
    pub lambda: f64,
    pub u: f64,
    pub m: f64,
}

/// Fold-averaged bound with its per-fold diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundEstimate {
    pub value: f64,
    pub folds: Vec<FoldValue>,
}

/// Random partition into `k` folds, each holding both arms.
pub fn split_folds(data: &Dataset, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let mut idx: Vec<usize> = (0..data.n()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::new(); k];
    for (pos, i) in idx.into_iter().enumerate() {
        folds[pos % k].push(i);
    }
    for (f, rows) in folds.iter_mut().enumerate() {
        rows.sort_unstable();
        let treated = rows.iter().filter(|&&i| data.treatments()[i] == 1).count();
        if treated == 0 || treated == rows.len() {
            return Err(Error::SingleArmFold { fold: f });
        }
    }
    Ok(folds)
}

fn radius_terms(div: Divergence, e: [f64; 2], eta_override: Option<f64>) -> Result<([f64; 2], [f64; 2])> {
    match eta_override {
        Some(eta) => Ok(([eta; 2], [0.0; 2])),
        None => Ok((
            [div.radius(e[0])?, div.radius(e[1])?],
            [div.radius_derivative(e[0])?, div.radius_derivative(e[1])?],
        )),
    }
}

/// Largest admissible shifted argument when forming pseudo-outcomes.
fn projection_edge(div: Divergence) -> f64 {
    if div.domain_closed() {
        psi_sup(div)
    } else {
        psi_sup(div) - PROJECTION_MARGIN
    }
}

/// Fits the dual network, propensity and pseudo-outcome regression of every fold.
pub fn fit_conditional(data: &Dataset, div: Divergence, direction: Direction, cfg: &ConditionalConfig, seed: u64) -> Result<ConditionalFit> {
    if data.n() < 200 {
        return Err(Error::Invalid(format!("conditional fit needs at least 200 rows, got {}", data.n())));
    }
    if cfg.folds < 2 {
        return Err(Error::Invalid("cross-fitting needs at least 2 folds".into()));
    }
    if let Some(eta) = cfg.eta_override {
        if !(eta >= 0.0) || !eta.is_finite() {
            return Err(Error::Domain(format!("radius override must be finite and non-negative, got {eta}")));
        }
    }
    cfg.optim.validate()?;
    let folds = split_folds(data, cfg.folds, seed)?;
    let jobs: Vec<usize> = (0..cfg.folds).collect();
    let fitted = crate::par_map(&jobs, |&k| fit_fold(data, div, direction, cfg, &folds, k, seed));
    let folds = fitted.into_iter().collect::<Result<Vec<_>>>()?;
    let hull = (0..data.d())
        .map(|j| {
            data.rows().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r[j]), hi.max(r[j])))
        })
        .collect();
    Ok(ConditionalFit { divergence: div, direction, eta_override: cfg.eta_override, folds, hull })
}

fn fold_seed(seed: u64, k: usize, salt: u64) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add((k as u64) << 8 | salt)
}

fn fit_fold(
    data: &Dataset,
    div: Divergence,
    direction: Direction,
    cfg: &ConditionalConfig,
    folds: &[Vec<usize>],
    k: usize,
    seed: u64,
) -> Result<FoldFit> {
    let rows = folds[k].clone();
    let eval = data.subset(&rows);
    let rest: Vec<usize> = folds.iter().enumerate().filter(|(j, _)| *j != k).flat_map(|(_, f)| f.iter().copied()).collect();
    let propensity = match &cfg.source {
        PropensitySource::Fixed(p) => p.clone(),
        PropensitySource::Fit => fit_propensity(&data.subset(&rest), &cfg.propensity, fold_seed(seed, k, 1))?,
        PropensitySource::FitWithNoise { scale, seed: noise_seed } => {
            let fitted = fit_propensity(&data.subset(&rest), &cfg.propensity, fold_seed(seed, k, 1))?;
            inject_propensity_noise(fitted, data.n(), *noise_seed, *scale)?
        }
    };

    let sign = direction.sign();
    let phi: Vec<f64> = eval.phi_values().iter().map(|v| sign * v).collect();
    let standardisation = Standardisation::fit(&phi);
    let d = data.d();
    let mut set = TrainSet {
        d,
        x: eval.covariates().to_vec(),
        a: eval.treatments().to_vec(),
        phi: phi.iter().map(|&v| standardisation.to_std(v)).collect(),
        e: Vec::with_capacity(eval.n()),
        eta: Vec::with_capacity(eval.n()),
        eta_prime: Vec::with_capacity(eval.n()),
    };
    for i in 0..eval.n() {
        let e1 = propensity.e1(eval.row(i));
        let e = [1.0 - e1, e1];
        let (eta, eta_prime) = radius_terms(div, e, cfg.eta_override)?;
        set.e.push(e);
        set.eta.push(eta);
        set.eta_prime.push(eta_prime);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(fold_seed(seed, k, 2));
    let mut order: Vec<usize> = (0..eval.n()).collect();
    order.shuffle(&mut rng);
    let n_val = ((cfg.optim.val_frac * eval.n() as f64).round() as usize).clamp(1, eval.n() - 1);
    let (val_idx, train_idx) = order.split_at(n_val);

    let (h0, w0) = marginal_start(div, &set, train_idx, cfg.optim.clip_h);
    let (center, scale) = covariate_scaling(&eval);
    let mut net = DualNetwork::new(center, scale, cfg.optim.hidden, cfg.optim.clip_h, h0, w0, fold_seed(seed, k, 3));
    let debias = cfg.debias && cfg.eta_override.is_none();
    let history = train(&mut net, div, &set, train_idx, val_idx, &cfg.optim, debias, fold_seed(seed, k, 4));
    net.shift_w(feasibility_offsets(div, &net, &set));

    let t0 = div.neutral_point();
    let edge = projection_edge(div);
    let mut z = Vec::with_capacity(eval.n());
    for i in 0..eval.n() {
        let (h, w) = net.eval(set.a[i], set.x_row(i));
        let r = (set.phi[i] - w) / h.exp();
        let r = if r > edge {
            if !cfg.optim.project {
                return Err(Error::InfinitePseudoOutcome { row: rows[i], t: t0 + r });
            }
            edge
        } else {
            r
        };
        // shifted pseudo-outcome g*(t0 + r) - t0
        z.push(r + psi(div, r));
    }
    let pseudo = fit_pseudo_outcome(&eval, &z, &cfg.pseudo, fold_seed(seed, k, 5))?;
    Ok(FoldFit { net, propensity, pseudo, standardisation, history, rows })
}

/// Per-arm shift of `w` that brings every fold row inside the smooth part of
/// the conjugate domain, chosen to minimise the fold risk among such shifts.
///
/// Any `(lambda, w)` with feasible arguments is a valid dual point, so the shift
/// only tightens or leaves the bound; it matters for rows held out of training.
fn feasibility_offsets(div: Divergence, net: &DualNetwork, set: &TrainSet) -> [f64; 2] {
    // a closed domain keeps g* finite at its edge, so no margin is needed there
    let edge = if div.domain_closed() { psi_sup(div) } else { psi_sup(div) - EDGE_MARGIN };
    let mut out = [0.0; 2];
    for arm in 0..2u8 {
        let pts: Vec<(f64, f64)> = (0..set.a.len())
            .filter(|&i| set.a[i] == arm)
            .map(|i| {
                let (h, w) = net.eval(arm, set.x_row(i));
                let lambda = h.exp();
                ((set.phi[i] - w) / lambda, lambda)
            })
            .collect();
        let lo = pts.iter().map(|&(r, l)| l * (r - edge)).fold(0.0, f64::max);
        if lo == 0.0 {
            continue;
        }
        // risk derivative in the shift is -sum psi'(r - delta / lambda), increasing in delta
        let slope = |delta: f64| -pts.iter().map(|&(r, l)| psi_d1(div, r - delta / l)).sum::<f64>();
        if slope(lo) >= 0.0 {
            out[usize::from(arm)] = lo;
            continue;
        }
        let mut hi = 2.0 * lo;
        while slope(hi) < 0.0 && hi < 1e12 {
            hi *= 2.0;
        }
        let mut a = lo;
        for _ in 0..200 {
            let mid = 0.5 * (a + hi);
            if slope(mid) < 0.0 {
                a = mid;
            } else {
                hi = mid;
            }
        }
        out[usize::from(arm)] = 0.5 * (a + hi);
    }
    out
}

impl TrainSet {
    fn x_row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }
}

/// Per-arm scalar dual optimum on the training rows, used as the network's starting point.
fn marginal_start(div: Divergence, set: &TrainSet, idx: &[usize], clip_h: f64) -> ([f64; 2], [f64; 2]) {
    let t0 = div.neutral_point();
    let mut h0 = [0.0; 2];
    let mut w0 = [0.0; 2];
    for arm in 0..2u8 {
        let rows: Vec<usize> = idx.iter().copied().filter(|&i| set.a[i] == arm).collect();
        if rows.is_empty() {
            continue;
        }
        let values: Vec<f64> = rows.iter().map(|&i| set.phi[i]).collect();
        let eta = rows.iter().map(|&i| set.eta[i][usize::from(arm)]).sum::<f64>() / rows.len() as f64;
        let weights = vec![1.0; values.len()];
        let vmax = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        match dual_on_values(&weights, &values, div, eta) {
            Ok(sol) if sol.lambda.is_finite() && sol.lambda > 0.0 => {
                h0[usize::from(arm)] = sol.lambda.ln().clamp(-clip_h, clip_h);
                w0[usize::from(arm)] = sol.u + sol.lambda.ln().clamp(-clip_h, clip_h).exp() * t0;
            }
            // any w above the largest value keeps every argument feasible at lambda = 1
            _ => w0[usize::from(arm)] = vmax,
        }
    }
    (h0, w0)
}

fn covariate_scaling(data: &Dataset) -> (Vec<f64>, Vec<f64>) {
    let d = data.d();
    let n = data.n().max(1) as f64;
    let mut center = vec![0.0; d];
    let mut scale = vec![1.0; d];
    for j in 0..d {
        let mean = data.rows().map(|r| r[j]).sum::<f64>() / n;
        let var = data.rows().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
        center[j] = mean;
        scale[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
    }
    (center, scale)
}

impl ConditionalFit {
    /// Same fit evaluated with a different radius (training is unaffected).
    pub fn with_eta_override(mut self, eta: Option<f64>) -> Self {
        self.eta_override = eta;
        self
    }

    fn outside_hull(&self, x: &[f64]) -> bool {
        x.iter().zip(&self.hull).any(|(v, (lo, hi))| v < lo || v > hi)
    }
}

/// Fold average of `lambda_k (eta_k + m_k) + u_k` at `(a, x)`.
pub fn evaluate_bound(fit: &ConditionalFit, a: u8, x: &[f64]) -> Result<BoundEstimate> {
    if x.len() != fit.hull.len() {
        return Err(Error::Invalid(format!("query has {} covariates, model expects {}", x.len(), fit.hull.len())));
    }
    if fit.outside_hull(x) {
        log::warn!("query point {x:?} lies outside the covariate range of the training data");
    }
    let div = fit.divergence;
    let sign = fit.direction.sign();
    let t0 = div.neutral_point();
    let mut folds = Vec::with_capacity(fit.folds.len());
    for fold in &fit.folds {
        let e_hat = fold.propensity.e(a, x);
        let eta = match fit.eta_override {
            Some(eta) => eta,
            None => div.radius(e_hat)?,
        };
        let (h, w) = fold.net.eval(a, x);
        let lambda_std = h.exp();
        let m_shifted = fold.pseudo.predict(a, x);
        let theta_std = lambda_std * (eta + m_shifted) + w;
        let s = fold.standardisation;
        let lambda = s.scale * lambda_std;
        folds.push(FoldValue {
            theta: sign * s.from_std(theta_std),
            e_hat,
            eta,
            lambda,
            u: s.from_std(w) - lambda * t0,
            m: t0 + m_shifted,
        });
    }
    let value = folds.iter().map(|f| f.theta).sum::<f64>() / folds.len() as f64;
    Ok(BoundEstimate { value, folds })
}

/// Debiased risk of one observed row `(x, a, y)` under a fold's fitted duals, in outcome units.
pub fn debiased_loss(fit: &ConditionalFit, fold: usize, row: (&[f64], u8, f64), phi: &crate::data::Phi) -> Result<f64> {
    let f = fit.folds.get(fold).ok_or_else(|| Error::Invalid(format!("no fold {fold}")))?;
    let (x, a, y) = row;
    let div = fit.divergence;
    let e1 = f.propensity.e1(x);
    let e = [1.0 - e1, e1];
    let (eta, eta_prime) = radius_terms(div, e, fit.eta_override)?;
    let s = f.standardisation;
    let input = super::loss::RowInput { x, a, phi: s.to_std(fit.direction.sign() * phi.apply(y)), e, eta, eta_prime };
    let mut caches = [f.net.new_cache(), f.net.new_cache()];
    let settings = super::loss::LossSettings { debias: fit.eta_override.is_none(), barrier_weight: 0.0 };
    let std_loss = super::loss::row_loss(&f.net, div, &input, settings, None, &mut caches, &mut Vec::new());
    Ok(s.from_std(std_loss))
}
