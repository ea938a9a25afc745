//! Synthetic confounded data, evaluation metrics, and propensity-noise injection.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StudentT};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Phi};
use crate::error::{Error, Result};
use crate::nuisance::propensity::{NoiseScale, PropensityEstimate};
use crate::quadrature::GaussHermite;

/// Coefficients of the structural equations that tests may switch off.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScmCoefficients {
    /// Weight of `U` in the propensity logit.
    pub u_in_logit: f64,
    /// Weight of `U` in the outcome.
    pub u_in_outcome: f64,
    /// Slope of the treatment effect in the propensity.
    pub effect_propensity_slope: f64,
    /// Degrees of freedom of the Student-t outcome noise.
    pub noise_df: f64,
}

impl Default for ScmCoefficients {
    fn default() -> Self {
        ScmCoefficients { u_in_logit: 0.8, u_in_outcome: 0.7, effect_propensity_slope: 0.8, noise_df: 3.0 }
    }
}

/// The confounded benchmark model with a latent normal `U`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScm {
    pub d: usize,
    pub w: Vec<f64>,
    pub coef: ScmCoefficients,
}

impl Default for SyntheticScm {
    fn default() -> Self {
        SyntheticScm::new(5, 0)
    }
}

impl SyntheticScm {
    /// Draws the logit weights `w ~ N(0, 0.6^2)` from `weight_seed`.
    pub fn new(d: usize, weight_seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(weight_seed);
        let normal = Normal::new(0.0, 0.6).expect("valid normal");
        let w = (0..d).map(|_| normal.sample(&mut rng)).collect();
        SyntheticScm { d, w, coef: ScmCoefficients::default() }
    }

    /// Removes every path from `U` to `Y`, leaving `U` a pure propensity shifter.
    pub fn unconfounded(mut self) -> Self {
        self.coef.u_in_outcome = 0.0;
        self.coef.effect_propensity_slope = 0.0;
        self
    }

    fn x(x: &[f64], j: usize) -> f64 {
        x.get(j).copied().unwrap_or(0.0)
    }

    pub fn logit(&self, x: &[f64], u: f64) -> f64 {
        let x0 = Self::x(x, 0);
        let lin: f64 = x.iter().zip(&self.w).map(|(a, b)| a * b).sum();
        lin + self.coef.u_in_logit * u + 0.5 * x0.sin() - 0.25 * x0 * x0
    }

    /// `e(x, u) = 0.05 + 0.9 sigmoid(L)`, inside `[0.05, 0.95]` by construction.
    pub fn propensity(&self, x: &[f64], u: f64) -> f64 {
        0.05 + 0.9 / (1.0 + (-self.logit(x, u)).exp())
    }

    pub fn mu(&self, x: &[f64]) -> f64 {
        0.5 + 0.8 * Self::x(x, 0).tanh() + 0.25 * Self::x(x, 1).powi(2) - 0.15 * Self::x(x, 2).sin()
    }

    pub fn tau(&self, x: &[f64], p: f64) -> f64 {
        let x0 = Self::x(x, 0);
        0.7 + 0.2 * x0.sin() + 0.1 * x0 + self.coef.effect_propensity_slope * (p - 0.5)
    }

    fn outcome(&self, x: &[f64], u: f64, a: u8, eps: f64) -> f64 {
        self.mu(x) + self.tau(x, self.propensity(x, u)) * f64::from(a) + self.coef.u_in_outcome * u + eps
    }

    fn noise(&self) -> StudentT<f64> {
        StudentT::new(self.coef.noise_df).expect("positive degrees of freedom")
    }

    /// `n` draws of the outcome noise alone.
    pub fn noise_sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = self.noise();
        (0..n).map(|_| t.sample(&mut rng)).collect()
    }

    /// Draws `n` rows; the same seed reproduces the same dataset.
    pub fn generate(&self, n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).expect("valid normal");
        let t = self.noise();
        let mut xs = Vec::with_capacity(n * self.d);
        let mut a = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        let mut row = vec![0.0; self.d];
        for _ in 0..n {
            for v in row.iter_mut() {
                *v = rng.random_range(-2.0..2.0);
            }
            let u = normal.sample(&mut rng);
            let arm = u8::from(rng.random::<f64>() < self.propensity(&row, u));
            let eps = t.sample(&mut rng);
            xs.extend_from_slice(&row);
            a.push(arm);
            y.push(self.outcome(&row, u, arm, eps));
        }
        Dataset::new(self.d, xs, a, y, Phi::Identity).expect("generated data is well formed")
    }

    /// `E_U[e(x, U)]`, the propensity after marginalising the latent variable.
    pub fn oracle_propensity(&self, x: &[f64]) -> f64 {
        gauss_hermite().expect(|u| self.propensity(x, u))
    }

    /// `E[Y | do(A = a), X = x]` by quadrature over `U`; valid for the identity functional.
    pub fn interventional_mean(&self, a: u8, x: &[f64]) -> f64 {
        self.mu(x) + f64::from(a) * gauss_hermite().expect(|u| self.tau(x, self.propensity(x, u)))
    }

    /// `E[Y | A = a, X = x]` by quadrature over `U` reweighted by `Pr(A = a | x, U)`.
    pub fn observational_mean(&self, a: u8, x: &[f64]) -> f64 {
        let gh = gauss_hermite();
        let weight = |u: f64| {
            let e = self.propensity(x, u);
            if a == 1 {
                e
            } else {
                1.0 - e
            }
        };
        let norm = gh.expect(weight);
        let num = gh.expect(|u| {
            weight(u)
                * (self.mu(x)
                    + f64::from(a) * self.tau(x, self.propensity(x, u))
                    + self.coef.u_in_outcome * u)
        });
        num / norm
    }

    fn noise_cdf(&self, t: f64) -> f64 {
        use statrs::distribution::{ContinuousCDF, StudentsT};
        StudentsT::new(0.0, 1.0, self.coef.noise_df).expect("positive degrees of freedom").cdf(t)
    }

    /// `Pr(Y <= c | A = a, X = x)`, integrating the noise exactly and `U` by quadrature.
    pub fn observational_cdf(&self, a: u8, x: &[f64], c: f64) -> f64 {
        let gh = gauss_hermite();
        let weight = |u: f64| {
            let e = self.propensity(x, u);
            if a == 1 {
                e
            } else {
                1.0 - e
            }
        };
        let num = gh.expect(|u| weight(u) * self.noise_cdf(c - self.outcome(x, u, a, 0.0)));
        num / gh.expect(weight)
    }

    /// `Pr(Y <= c | do(A = a), X = x)`.
    pub fn interventional_cdf(&self, a: u8, x: &[f64], c: f64) -> f64 {
        gauss_hermite().expect(|u| self.noise_cdf(c - self.outcome(x, u, a, 0.0)))
    }

    /// Draws points from the covariate marginal.
    pub fn evaluation_grid(&self, points: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..points).map(|_| (0..self.d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect()
    }

    /// Monte Carlo draws of `phi(Y)` under `do(A = a)` at a fixed `x`.
    pub(crate) fn interventional_draws(&self, a: u8, x: &[f64], phi: &Phi, draws: usize, rng: &mut ChaCha8Rng) -> (f64, f64) {
        let normal = Normal::new(0.0, 1.0).expect("valid normal");
        let t = self.noise();
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..draws {
            let u = normal.sample(rng);
            let v = phi.apply(self.outcome(x, u, a, t.sample(rng)));
            sum += v;
            sum_sq += v * v;
        }
        let n = draws as f64;
        let mean = sum / n;
        let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
        (mean, (var / n).sqrt())
    }
}

fn gauss_hermite() -> &'static GaussHermite {
    use std::sync::OnceLock;
    static RULE: OnceLock<GaussHermite> = OnceLock::new();
    RULE.get_or_init(|| GaussHermite::new(60))
}

/// `width * (1 + a * max(0, (1 - alpha) - coverage))`.
pub fn penalized_width(width: f64, coverage: f64, a: f64, alpha: f64) -> f64 {
    width * (1.0 + a * (1.0 - alpha - coverage).max(0.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub truth: f64,
    pub lo: f64,
    pub up: f64,
    pub covered: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub coverage: f64,
    pub width: f64,
    pub penalized_width: f64,
    pub points: Vec<PointRecord>,
}

pub fn evaluate_run(truth: &[f64], intervals: &[(f64, f64)], a: f64, alpha: f64) -> Result<EvalReport> {
    if truth.len() != intervals.len() {
        return Err(Error::Invalid(format!("{} truths for {} intervals", truth.len(), intervals.len())));
    }
    if truth.is_empty() {
        return Err(Error::Invalid("no evaluation points".into()));
    }
    let points: Vec<PointRecord> = truth
        .iter()
        .zip(intervals)
        .map(|(&t, &(lo, up))| PointRecord { truth: t, lo, up, covered: lo <= t && t <= up })
        .collect();
    let n = points.len() as f64;
    let coverage = points.iter().filter(|p| p.covered).count() as f64 / n;
    let width = points.iter().map(|p| (p.up - p.lo).max(0.0)).sum::<f64>() / n;
    Ok(EvalReport { coverage, width, penalized_width: penalized_width(width, coverage, a, alpha), points })
}

/// Adds `N(n^{-1/4}, n^{-1/4})` noise to every prediction, then re-clips.
pub fn inject_propensity_noise(prop: PropensityEstimate, n: usize, seed: u64, scale: NoiseScale) -> Result<PropensityEstimate> {
    if n < 2 {
        return Err(Error::Invalid("noise injection needs n >= 2".into()));
    }
    let level = (n as f64).powf(-0.25);
    let sd = match scale {
        NoiseScale::Sd => level,
        NoiseScale::Var => level.sqrt(),
    };
    Ok(prop.with_noise(level, sd, seed))
}
