use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::divergence::Divergence;
use crate::error::{Error, Result};

/// Univariate members of the exponential family used as test laws.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ExpFamilyLaw {
    Bernoulli { p: f64 },
    Gaussian { mean: f64, var: f64 },
    Poisson { rate: f64 },
    Exponential { rate: f64 },
}

impl ExpFamilyLaw {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ExpFamilyLaw::Bernoulli { p } => p > 0.0 && p < 1.0,
            ExpFamilyLaw::Gaussian { mean, var } => mean.is_finite() && var > 0.0,
            ExpFamilyLaw::Poisson { rate } | ExpFamilyLaw::Exponential { rate } => rate > 0.0 && rate.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid parameters for {self:?}")))
        }
    }

    fn family(&self) -> &'static str {
        match self {
            ExpFamilyLaw::Bernoulli { .. } => "bernoulli",
            ExpFamilyLaw::Gaussian { .. } => "gaussian",
            ExpFamilyLaw::Poisson { .. } => "poisson",
            ExpFamilyLaw::Exponential { .. } => "exponential",
        }
    }

    fn check_support(&self, y: f64) -> Result<()> {
        let ok = match self {
            ExpFamilyLaw::Bernoulli { .. } => y == 0.0 || y == 1.0,
            ExpFamilyLaw::Gaussian { .. } => y.is_finite(),
            ExpFamilyLaw::Poisson { .. } => y >= 0.0 && y.fract() == 0.0,
            ExpFamilyLaw::Exponential { .. } => y >= 0.0 && y.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("y = {y} outside the {} support", self.family())))
        }
    }
}

/// `dP/dQ(y)` for two laws of the same family.
pub fn rn_derivative(p: &ExpFamilyLaw, q: &ExpFamilyLaw, y: f64) -> Result<f64> {
    p.validate()?;
    q.validate()?;
    p.check_support(y)?;
    Ok(match (*p, *q) {
        (ExpFamilyLaw::Bernoulli { p }, ExpFamilyLaw::Bernoulli { p: q }) => {
            (y * ((p * (1.0 - q)) / (q * (1.0 - p))).ln() + ((1.0 - p) / (1.0 - q)).ln()).exp()
        }
        (ExpFamilyLaw::Gaussian { mean: mp, var: vp }, ExpFamilyLaw::Gaussian { mean: mq, var: vq }) => {
            (vq / vp).sqrt() * (-(y - mp).powi(2) / (2.0 * vp) + (y - mq).powi(2) / (2.0 * vq)).exp()
        }
        (ExpFamilyLaw::Poisson { rate: lp }, ExpFamilyLaw::Poisson { rate: lq }) => {
            (y * (lp / lq).ln() - (lp - lq)).exp()
        }
        (ExpFamilyLaw::Exponential { rate: lp }, ExpFamilyLaw::Exponential { rate: lq }) => {
            lp / lq * (-(lp - lq) * y).exp()
        }
        _ => {
            return Err(Error::Invalid(format!(
                "Radon-Nikodym derivative between different families ({} vs {})",
                p.family(),
                q.family()
            )))
        }
    })
}

/// A law on finitely many outcome values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteLaw {
    support: Vec<f64>,
    probs: Vec<f64>,
}

impl DiscreteLaw {
    pub fn new(support: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if support.is_empty() || support.len() != probs.len() {
            return Err(Error::Invalid("support and probabilities must be non-empty and aligned".into()));
        }
        if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::Invalid("probabilities must be finite and non-negative".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Invalid(format!("probabilities sum to {total}, not 1")));
        }
        if support.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("support values must be finite".into()));
        }
        Ok(DiscreteLaw { support, probs })
    }

    /// Normalises non-negative weights into a law.
    pub fn from_weights(support: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Invalid("weights must have positive mass".into()));
        }
        let probs = weights.iter().map(|w| w / total).collect();
        let mut law = DiscreteLaw { support, probs };
        // absorb rounding so that the sum is 1 to machine precision
        let s: f64 = law.probs.iter().sum();
        law.probs.iter_mut().for_each(|p| *p /= s);
        Self::new(law.support, law.probs)
    }

    /// Empirical law of a sample, merging repeated values.
    pub fn empirical(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Invalid("empirical law of an empty sample".into()));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut support = Vec::new();
        let mut counts: Vec<f64> = Vec::new();
        for v in sorted {
            if support.last() == Some(&v) {
                *counts.last_mut().unwrap() += 1.0;
            } else {
                support.push(v);
                counts.push(1.0);
            }
        }
        Self::from_weights(support, counts)
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn expect<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.support.iter().zip(&self.probs).map(|(&y, &p)| p * f(y)).sum()
    }

    fn mass_at(&self, y: f64) -> f64 {
        self.support.iter().zip(&self.probs).filter(|(&s, _)| s == y).map(|(_, &p)| p).sum()
    }
}

/// Either kind of test law.
#[derive(Clone, Debug, PartialEq)]
pub enum Law {
    Exp(ExpFamilyLaw),
    Discrete(DiscreteLaw),
}

impl From<ExpFamilyLaw> for Law {
    fn from(l: ExpFamilyLaw) -> Self {
        Law::Exp(l)
    }
}

impl From<DiscreteLaw> for Law {
    fn from(l: DiscreteLaw) -> Self {
        Law::Discrete(l)
    }
}

/// A divergence value with its Monte Carlo standard error (zero when exact).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceValue {
    pub value: f64,
    pub std_error: f64,
}

/// `D_f(P || Q) = E_Q[f(dP/dQ)]`, exact for discrete laws and by Monte Carlo
/// under `Q` for the Gaussian and exponential families.
pub fn exact_divergence(div: Divergence, p: &Law, q: &Law, mc_draws: usize, seed: u64) -> Result<DivergenceValue> {
    match (p, q) {
        (Law::Discrete(p), Law::Discrete(q)) => discrete_divergence(div, p, q).map(exact),
        (Law::Exp(p), Law::Exp(q)) => exp_family_divergence(div, p, q, mc_draws, seed),
        _ => Err(Error::Invalid("cannot compare a discrete law with an exponential-family law".into())),
    }
}

fn exact(value: f64) -> DivergenceValue {
    DivergenceValue { value, std_error: 0.0 }
}

fn discrete_divergence(div: Divergence, p: &DiscreteLaw, q: &DiscreteLaw) -> Result<f64> {
    let mut values: Vec<f64> = p.support.iter().chain(&q.support).copied().collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let mut total = 0.0;
    for y in values {
        let (pm, qm) = (p.mass_at(y), q.mass_at(y));
        if qm > 0.0 {
            total += qm * div.f(pm / qm);
        } else if pm > 0.0 {
            return Err(Error::AbsoluteContinuity(format!("P puts mass {pm} on y = {y} where Q has none")));
        }
    }
    Ok(total)
}

fn exp_family_divergence(
    div: Divergence,
    p: &ExpFamilyLaw,
    q: &ExpFamilyLaw,
    mc_draws: usize,
    seed: u64,
) -> Result<DivergenceValue> {
    p.validate()?;
    q.validate()?;
    match (*p, *q) {
        (ExpFamilyLaw::Bernoulli { p: pp }, ExpFamilyLaw::Bernoulli { p: qq }) => {
            Ok(exact(qq * div.f(pp / qq) + (1.0 - qq) * div.f((1.0 - pp) / (1.0 - qq))))
        }
        (ExpFamilyLaw::Poisson { .. }, ExpFamilyLaw::Poisson { rate: lq }) => {
            // truncated sum; the tail beyond mean + 40 sd is below double precision
            let kmax = (lq + 40.0 * lq.sqrt() + 50.0).ceil() as u64;
            let mut log_fact = 0.0;
            let mut total = 0.0;
            for k in 0..=kmax {
                if k > 0 {
                    log_fact += (k as f64).ln();
                }
                let kf = k as f64;
                let log_q = kf * lq.ln() - lq - log_fact;
                let ratio = rn_derivative(p, q, kf)?;
                total += log_q.exp() * div.f(ratio);
            }
            Ok(exact(total))
        }
        (ExpFamilyLaw::Gaussian { .. }, ExpFamilyLaw::Gaussian { mean, var }) => {
            let normal = Normal::new(mean, var.sqrt()).map_err(|e| Error::Domain(e.to_string()))?;
            monte_carlo(div, p, q, mc_draws, seed, |rng| normal.sample(rng))
        }
        (ExpFamilyLaw::Exponential { .. }, ExpFamilyLaw::Exponential { rate }) => {
            let expo = Exp::new(rate).map_err(|e| Error::Domain(e.to_string()))?;
            monte_carlo(div, p, q, mc_draws, seed, |rng| expo.sample(rng))
        }
        _ => Err(Error::Invalid("divergence between different families".into())),
    }
}

fn monte_carlo<S>(
    div: Divergence,
    p: &ExpFamilyLaw,
    q: &ExpFamilyLaw,
    mc_draws: usize,
    seed: u64,
    mut sample_q: S,
) -> Result<DivergenceValue>
where
    S: FnMut(&mut ChaCha8Rng) -> f64,
{
    if mc_draws < 100_000 {
        return Err(Error::Invalid(format!("continuous families need at least 1e5 draws, got {mc_draws}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..mc_draws {
        let y = sample_q(&mut rng);
        let v = div.f(rn_derivative(p, q, y)?);
        sum += v;
        sum_sq += v * v;
    }
    let n = mc_draws as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
    Ok(DivergenceValue { value: mean, std_error: (var / n).sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rn_examples() {
        let b = ExpFamilyLaw::Bernoulli { p: 0.7 };
        let c = ExpFamilyLaw::Bernoulli { p: 0.5 };
        assert!((rn_derivative(&b, &b, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((rn_derivative(&b, &c, 1.0).unwrap() - 1.4).abs() < 1e-12);
        assert!((rn_derivative(&b, &c, 0.0).unwrap() - 0.6).abs() < 1e-12);
        let e2 = ExpFamilyLaw::Exponential { rate: 2.0 };
        let e1 = ExpFamilyLaw::Exponential { rate: 1.0 };
        assert!((rn_derivative(&e2, &e1, 0.0).unwrap() - 2.0).abs() < 1e-15);
        let g = ExpFamilyLaw::Gaussian { mean: 0.3, var: 2.0 };
        assert!((rn_derivative(&g, &g, -1.7).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rn_errors() {
        let b = ExpFamilyLaw::Bernoulli { p: 0.7 };
        let e = ExpFamilyLaw::Exponential { rate: 1.0 };
        assert!(rn_derivative(&b, &e, 1.0).is_err());
        assert!(rn_derivative(&b, &b, 0.5).is_err());
        assert!(rn_derivative(&e, &e, -1.0).is_err());
        let p = ExpFamilyLaw::Poisson { rate: 2.0 };
        assert!(rn_derivative(&p, &p, 1.5).is_err());
    }

    #[test]
    fn bernoulli_kl_exact() {
        let p = ExpFamilyLaw::Bernoulli { p: 0.7 }.into();
        let q = ExpFamilyLaw::Bernoulli { p: 0.5 }.into();
        let d = exact_divergence(Divergence::Kl, &p, &q, 0, 0).unwrap();
        let oracle = 0.7 * 1.4f64.ln() + 0.3 * 0.6f64.ln();
        assert!((d.value - oracle).abs() < 1e-15);
        assert!((d.value - 0.082_283).abs() < 1e-6);
    }

    #[test]
    fn discrete_tv_and_identity() {
        let p: Law = DiscreteLaw::new(vec![0.0, 1.0], vec![0.9, 0.1]).unwrap().into();
        let q: Law = DiscreteLaw::new(vec![0.0, 1.0], vec![0.5, 0.5]).unwrap().into();
        let d = exact_divergence(Divergence::Tv, &p, &q, 0, 0).unwrap();
        assert!((d.value - 0.4).abs() < 1e-15);
        for div in Divergence::ALL {
            assert_eq!(exact_divergence(div, &p, &p, 0, 0).unwrap().value, 0.0);
        }
    }

    #[test]
    fn discrete_requires_absolute_continuity() {
        let p: Law = DiscreteLaw::new(vec![0.0, 1.0], vec![0.5, 0.5]).unwrap().into();
        let q: Law = DiscreteLaw::new(vec![2.0, 3.0], vec![0.5, 0.5]).unwrap().into();
        assert!(matches!(exact_divergence(Divergence::Kl, &p, &q, 0, 0), Err(Error::AbsoluteContinuity(_))));
    }

    #[test]
    fn gaussian_kl_matches_closed_form_within_3se() {
        let (mp, vp, mq, vq) = (0.5, 1.5, -0.2, 1.0);
        let p = ExpFamilyLaw::Gaussian { mean: mp, var: vp }.into();
        let q = ExpFamilyLaw::Gaussian { mean: mq, var: vq }.into();
        let d = exact_divergence(Divergence::Kl, &p, &q, 200_000, 7).unwrap();
        let closed = 0.5 * (vq / vp).ln() + (vp + (mp - mq) * (mp - mq)) / (2.0 * vq) - 0.5;
        assert!((d.value - closed).abs() < 3.0 * d.std_error, "{} vs {closed} (se {})", d.value, d.std_error);
    }

    #[test]
    fn poisson_kl_matches_closed_form() {
        let (lp, lq) = (3.0f64, 2.0f64);
        let p = ExpFamilyLaw::Poisson { rate: lp }.into();
        let q = ExpFamilyLaw::Poisson { rate: lq }.into();
        let d = exact_divergence(Divergence::Kl, &p, &q, 0, 0).unwrap();
        let closed = lp * (lp / lq).ln() - lp + lq;
        assert!((d.value - closed).abs() < 1e-12);
    }

    #[test]
    fn continuous_needs_enough_draws() {
        let p = ExpFamilyLaw::Exponential { rate: 2.0 }.into();
        let q = ExpFamilyLaw::Exponential { rate: 1.0 }.into();
        assert!(exact_divergence(Divergence::Kl, &p, &q, 1000, 0).is_err());
    }

    #[test]
    fn empirical_law_merges_ties() {
        let law = DiscreteLaw::empirical(&[1.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(law.support(), &[0.0, 1.0]);
        assert!((law.probs()[1] - 0.75).abs() < 1e-15);
    }
}
