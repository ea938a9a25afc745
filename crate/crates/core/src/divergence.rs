//! f-divergence generators, propensity-driven radii and convex conjugates.
//!
//! Every divergence here is `D_f(P || Q) = E_Q[f(dP/dQ)]` for a convex `f`
//! with `f(1) = 0` and finite `f(0)`. Two derived objects drive the rest of
//! the crate:
//!
//! * the radius `B_f(e) = e f(1/e) + (1 - e) f(0)`, an upper bound on the
//!   divergence between the observational and interventional outcome laws of
//!   an arm whose propensity is `e`;
//! * the convex conjugate `g*(t) = sup_{s > 0} { s t - g(s) }` of the
//!   perspective `g(s) = s f(1/s)`, which is the kernel of the dual program.

use std::f64::consts::LN_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `x ln x` with the convention `0 ln 0 = 0`.
#[inline]
pub(crate) fn xlogx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// A value of the extended real line that can only overflow upwards.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Extended {
    Finite(f64),
    PosInf,
}

impl Extended {
    pub fn is_finite(self) -> bool {
        matches!(self, Extended::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Extended::Finite(v) => Some(v),
            Extended::PosInf => None,
        }
    }

    /// Collapses to IEEE arithmetic; `PosInf` becomes `f64::INFINITY`.
    pub fn to_f64(self) -> f64 {
        match self {
            Extended::Finite(v) => v,
            Extended::PosInf => f64::INFINITY,
        }
    }
}

/// The five supported f-generators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Divergence {
    /// Kullback-Leibler, `f(t) = t ln t`.
    Kl,
    /// Hellinger, `f(t) = (sqrt(t) - 1)^2 / 2`.
    Hellinger,
    /// Chi-square, `f(t) = (t - 1)^2 / 2`.
    ChiSq,
    /// Total variation, `f(t) = |t - 1| / 2`.
    Tv,
    /// Jensen-Shannon, `f(t) = (t ln t - (t + 1) ln((t + 1) / 2)) / 2`.
    Js,
}

impl Divergence {
    pub const ALL: [Divergence; 5] = [
        Divergence::Kl,
        Divergence::Hellinger,
        Divergence::ChiSq,
        Divergence::Tv,
        Divergence::Js,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Divergence::Kl => "kl",
            Divergence::Hellinger => "hellinger",
            Divergence::ChiSq => "chisq",
            Divergence::Tv => "tv",
            Divergence::Js => "js",
        }
    }

    /// The generator `f(t)` for `t >= 0`.
    pub fn f(self, t: f64) -> f64 {
        match self {
            Divergence::Kl => xlogx(t),
            Divergence::Hellinger => 0.5 * (t.sqrt() - 1.0).powi(2),
            Divergence::ChiSq => 0.5 * (t - 1.0).powi(2),
            Divergence::Tv => 0.5 * (t - 1.0).abs(),
            Divergence::Js => 0.5 * (xlogx(t) - (t + 1.0) * ((t + 1.0) / 2.0).ln()),
        }
    }

    pub fn f_at_zero(self) -> f64 {
        match self {
            Divergence::Kl => 0.0,
            Divergence::Hellinger | Divergence::ChiSq | Divergence::Tv => 0.5,
            Divergence::Js => 0.5 * LN_2,
        }
    }

    /// The perspective `g(s) = s f(1/s)` for `s > 0`; at `s = 0` the limit
    /// (possibly `+inf`) is returned.
    pub fn g(self, s: f64) -> f64 {
        match self {
            Divergence::Kl => -s.ln(),
            Divergence::Hellinger => 0.5 * (1.0 - 2.0 * s.sqrt() + s),
            Divergence::ChiSq => (1.0 - s).powi(2) / (2.0 * s),
            Divergence::Tv => 0.5 * (1.0 - s).abs(),
            Divergence::Js => 0.5 * (xlogx(s) - (1.0 + s) * (1.0 + s).ln() + (1.0 + s) * LN_2),
        }
    }

    /// `g'(s)`; for total variation the right derivative.
    pub fn g_prime(self, s: f64) -> f64 {
        match self {
            Divergence::Kl => -1.0 / s,
            Divergence::Hellinger => 0.5 * (1.0 - 1.0 / s.sqrt()),
            Divergence::ChiSq => 0.5 * (1.0 - 1.0 / (s * s)),
            Divergence::Tv => {
                if s < 1.0 {
                    -0.5
                } else {
                    0.5
                }
            }
            Divergence::Js => 0.5 * (2.0 * s / (1.0 + s)).ln(),
        }
    }

    /// `g''(s)`; zero almost everywhere for total variation.
    pub fn g_second(self, s: f64) -> f64 {
        match self {
            Divergence::Kl => 1.0 / (s * s),
            Divergence::Hellinger => 0.25 * s.powf(-1.5),
            Divergence::ChiSq => 1.0 / (s * s * s),
            Divergence::Tv => 0.0,
            Divergence::Js => 0.5 / (s * (1.0 + s)),
        }
    }

    /// The propensity-driven radius `B_f(e)`, specialised per divergence.
    pub fn radius(self, e: f64) -> Result<f64> {
        check_propensity(e)?;
        Ok(match self {
            Divergence::Kl => -e.ln(),
            Divergence::Hellinger => 1.0 - e.sqrt(),
            Divergence::ChiSq => (1.0 - e) / (2.0 * e),
            Divergence::Tv => 1.0 - e,
            Divergence::Js => (0.5 * (4.0f64.ln() + xlogx(e) - xlogx(1.0 + e))).max(0.0),
        })
    }

    /// `B_f(e)` evaluated from the generator as `e f(1/e) + (1 - e) f(0)`.
    pub fn radius_generic(self, e: f64) -> Result<f64> {
        check_propensity(e)?;
        Ok(e * self.f(1.0 / e) + (1.0 - e) * self.f_at_zero())
    }

    /// `dB_f/de`, the sensitivity of the radius to the propensity.
    pub fn radius_derivative(self, e: f64) -> Result<f64> {
        check_propensity(e)?;
        Ok(self.radius_derivative_unchecked(e))
    }

    #[inline]
    pub(crate) fn radius_derivative_unchecked(self, e: f64) -> f64 {
        match self {
            Divergence::Kl => -1.0 / e,
            Divergence::Hellinger => -0.5 / e.sqrt(),
            Divergence::ChiSq => -0.5 / (e * e),
            Divergence::Tv => -1.0,
            Divergence::Js => 0.5 * (e / (1.0 + e)).ln(),
        }
    }

    /// Supremum of the finite domain of `g*`.
    pub fn domain_sup(self) -> f64 {
        match self {
            Divergence::Kl => 0.0,
            Divergence::Hellinger | Divergence::ChiSq | Divergence::Tv => 0.5,
            Divergence::Js => 0.5 * LN_2,
        }
    }

    /// Whether `g*` is still finite at `domain_sup`.
    pub fn domain_closed(self) -> bool {
        matches!(self, Divergence::ChiSq | Divergence::Tv)
    }

    /// The argument at which the conjugate's maximiser is `s = 1`, i.e. `g'(1)`.
    pub fn neutral_point(self) -> f64 {
        match self {
            Divergence::Kl => -1.0,
            _ => 0.0,
        }
    }

    #[inline]
    pub(crate) fn in_domain(self, t: f64) -> bool {
        let sup = self.domain_sup();
        if self.domain_closed() {
            t <= sup
        } else {
            t < sup
        }
    }

    /// The convex conjugate `g*(t)`.
    pub fn conjugate(self, t: f64) -> Extended {
        let v = self.conjugate_raw(t);
        if v.is_finite() {
            Extended::Finite(v)
        } else {
            Extended::PosInf
        }
    }

    /// `g*(t)` with `+inf` encoded as `f64::INFINITY`.
    #[inline]
    pub fn conjugate_raw(self, t: f64) -> f64 {
        if t.is_nan() {
            return f64::NAN;
        }
        if !self.in_domain(t) {
            return f64::INFINITY;
        }
        match self {
            Divergence::Kl => -1.0 - (-t).ln(),
            Divergence::Hellinger => t / (1.0 - 2.0 * t),
            Divergence::ChiSq => 1.0 - (1.0 - 2.0 * t).max(0.0).sqrt(),
            Divergence::Tv => t.max(-0.5),
            Divergence::Js => -0.5 * (2.0 - (2.0 * t).exp()).ln(),
        }
    }

    /// `d g*/dt`, defined strictly inside the finite domain.
    pub fn conjugate_derivative(self, t: f64) -> Result<f64> {
        if !(t < self.domain_sup()) {
            return Err(Error::Domain(format!(
                "{} conjugate derivative undefined at t = {t} (domain ends at {})",
                self.name(),
                self.domain_sup()
            )));
        }
        Ok(self.conjugate_derivative_raw(t))
    }

    /// `d g*/dt` without the domain check; `+inf` at or beyond the boundary.
    #[inline]
    pub fn conjugate_derivative_raw(self, t: f64) -> f64 {
        if !(t < self.domain_sup()) {
            return f64::INFINITY;
        }
        match self {
            Divergence::Kl => -1.0 / t,
            Divergence::Hellinger => {
                let d = 1.0 - 2.0 * t;
                1.0 / (d * d)
            }
            Divergence::ChiSq => 1.0 / (1.0 - 2.0 * t).sqrt(),
            Divergence::Tv => {
                if t <= -0.5 {
                    0.0
                } else {
                    1.0
                }
            }
            Divergence::Js => {
                let x = (2.0 * t).exp();
                x / (2.0 - x)
            }
        }
    }

    /// `d^2 g*/dt^2` strictly inside the domain.
    #[cfg(test)]
    pub(crate) fn conjugate_second_derivative_raw(self, t: f64) -> f64 {
        if !(t < self.domain_sup()) {
            return f64::INFINITY;
        }
        match self {
            Divergence::Kl => 1.0 / (t * t),
            Divergence::Hellinger => 4.0 / (1.0 - 2.0 * t).powi(3),
            Divergence::ChiSq => (1.0 - 2.0 * t).powf(-1.5),
            Divergence::Tv => 0.0,
            Divergence::Js => {
                let x = (2.0 * t).exp();
                4.0 * x / ((2.0 - x) * (2.0 - x))
            }
        }
    }
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Divergence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kl" => Ok(Divergence::Kl),
            "hellinger" | "h" => Ok(Divergence::Hellinger),
            "chisq" | "chi2" | "chisquare" => Ok(Divergence::ChiSq),
            "tv" => Ok(Divergence::Tv),
            "js" => Ok(Divergence::Js),
            other => Err(Error::Invalid(format!("unknown divergence '{other}'"))),
        }
    }
}

fn check_propensity(e: f64) -> Result<()> {
    if e > 0.0 && e <= 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("propensity {e} outside (0, 1]")))
    }
}

/// Policy-averaged radius `E_X[sum_a pi(a|X) B_f(e_a(X))]` over a covariate sample.
///
/// `policy(a, x)` and `propensity(x)` (= `e_1(x)`) are evaluated at every row;
/// arms with zero policy weight contribute nothing even when their propensity
/// is zero.
pub fn policy_radius<'a, I, P, E>(div: Divergence, covariates: I, policy: P, propensity: E) -> Result<f64>
where
    I: IntoIterator<Item = &'a [f64]>,
    P: Fn(u8, &[f64]) -> f64,
    E: Fn(&[f64]) -> f64,
{
    let mut total = 0.0;
    let mut n = 0usize;
    for x in covariates {
        let p1 = policy(1, x);
        let p0 = policy(0, x);
        if p0 < 0.0 || p1 < 0.0 || (p0 + p1 - 1.0).abs() > 1e-9 {
            return Err(Error::Invalid(format!("policy weights ({p0}, {p1}) do not sum to one")));
        }
        let e1 = propensity(x);
        for (w, e) in [(p0, 1.0 - e1), (p1, e1)] {
            if w > 0.0 {
                total += w * div.radius(e)?;
            }
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::Invalid("empty covariate sample".into()));
    }
    Ok(total / n as f64)
}

/// Which sup-norm scale is supplied to [`ipm_mmd_bound`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiscrepancyKind {
    /// Integral probability metric over `||f||_inf < C`; scale is `C`.
    Ipm,
    /// Maximum mean discrepancy with kernel bounded by `K`; scale is `sqrt(K)`.
    Mmd,
}

/// `2 * scale * min{1 - e, sqrt(-ln(e) / 2)}`.
pub fn ipm_mmd_bound(e: f64, scale: f64, _kind: DiscrepancyKind) -> Result<f64> {
    check_propensity(e)?;
    if !(scale > 0.0) {
        return Err(Error::Domain(format!("scale {scale} must be positive")));
    }
    let pinsker = (-0.5 * e.ln()).max(0.0).sqrt();
    Ok(2.0 * scale * (1.0 - e).min(pinsker))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn radius_examples() {
        assert_eq!(Divergence::Kl.radius(1.0).unwrap(), 0.0);
        assert_abs_diff_eq!(Divergence::Kl.radius(0.5).unwrap(), std::f64::consts::LN_2, epsilon = 1e-12);
        assert_abs_diff_eq!(Divergence::ChiSq.radius(0.5).unwrap(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(Divergence::Tv.radius(0.25).unwrap(), 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(Divergence::Hellinger.radius(0.25).unwrap(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(Divergence::Js.radius(1.0).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn radius_rejects_bad_propensity() {
        for div in Divergence::ALL {
            assert!(div.radius(0.0).is_err());
            assert!(div.radius(-0.1).is_err());
            assert!(div.radius(1.0 + 1e-12).is_err());
            assert!(div.radius(f64::NAN).is_err());
        }
    }

    #[test]
    fn specialised_radius_matches_generic() {
        for div in Divergence::ALL {
            for i in 1..=100 {
                let e = i as f64 / 100.0;
                let a = div.radius(e).unwrap();
                let b = div.radius_generic(e).unwrap();
                assert!((a - b).abs() < 1e-12, "{div} at {e}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn radius_derivative_matches_finite_differences() {
        let h = 1e-6;
        for div in Divergence::ALL {
            for e in [0.05, 0.2, 0.5, 0.8, 0.95] {
                let fd = (div.radius(e + h).unwrap() - div.radius(e - h).unwrap()) / (2.0 * h);
                let an = div.radius_derivative(e).unwrap();
                assert!((fd - an).abs() < 1e-6, "{div} at {e}: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn conjugate_examples() {
        assert_eq!(Divergence::ChiSq.conjugate(0.0), Extended::Finite(0.0));
        assert_eq!(Divergence::ChiSq.conjugate(0.5), Extended::Finite(1.0));
        assert_eq!(Divergence::Kl.conjugate(-1.0), Extended::Finite(-1.0));
        assert_eq!(Divergence::Tv.conjugate(-1.0), Extended::Finite(-0.5));
        assert_eq!(Divergence::Tv.conjugate(0.25), Extended::Finite(0.25));
        assert_eq!(Divergence::Js.conjugate(0.0), Extended::Finite(0.0));
        assert_eq!(Divergence::Kl.conjugate(0.0), Extended::PosInf);
        assert_eq!(Divergence::Hellinger.conjugate(0.5), Extended::PosInf);
        assert_eq!(Divergence::ChiSq.conjugate(0.500001), Extended::PosInf);
        assert_eq!(Divergence::Tv.conjugate(0.6), Extended::PosInf);
        assert_eq!(Divergence::Js.conjugate(0.5 * LN_2), Extended::PosInf);
    }

    #[test]
    fn conjugate_derivative_examples() {
        assert_abs_diff_eq!(Divergence::ChiSq.conjugate_derivative(0.0).unwrap(), 1.0);
        assert_abs_diff_eq!(Divergence::Kl.conjugate_derivative(-1.0).unwrap(), 1.0);
        assert!(Divergence::ChiSq.conjugate_derivative(0.5).is_err());
        assert!(Divergence::Kl.conjugate_derivative(0.0).is_err());
        assert!(Divergence::Tv.conjugate_derivative(0.5).is_err());
        let h = 1e-6;
        for t in [-1.0, 0.0, 0.3] {
            let d = Divergence::ChiSq;
            let fd = (d.conjugate_raw(t + h) - d.conjugate_raw(t - h)) / (2.0 * h);
            assert!((fd - d.conjugate_derivative(t).unwrap()).abs() < 1e-6);
        }
    }

    #[test]
    fn second_derivative_matches_finite_differences() {
        let h = 1e-5;
        for div in [Divergence::Kl, Divergence::Hellinger, Divergence::ChiSq, Divergence::Js] {
            for t in [-2.0, -0.7, -0.1] {
                let fd = (div.conjugate_derivative_raw(t + h) - div.conjugate_derivative_raw(t - h)) / (2.0 * h);
                let an = div.conjugate_second_derivative_raw(t);
                assert!((fd - an).abs() < 1e-5 * an.abs().max(1.0), "{div} {t}: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn ipm_mmd_examples() {
        assert_eq!(ipm_mmd_bound(1.0, 1.0, DiscrepancyKind::Ipm).unwrap(), 0.0);
        assert_abs_diff_eq!(ipm_mmd_bound(0.5, 1.0, DiscrepancyKind::Ipm).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ipm_mmd_bound(0.9, 2.0, DiscrepancyKind::Mmd).unwrap(), 0.4, epsilon = 1e-12);
        assert!(ipm_mmd_bound(0.0, 1.0, DiscrepancyKind::Ipm).is_err());
        assert!(ipm_mmd_bound(0.5, 0.0, DiscrepancyKind::Mmd).is_err());
    }

    #[test]
    fn policy_radius_examples() {
        let xs: Vec<Vec<f64>> = vec![vec![0.0], vec![1.0]];
        let rows = || xs.iter().map(|r| r.as_slice());

        let r = policy_radius(Divergence::Kl, rows(), |a, _| if a == 1 { 1.0 } else { 0.0 }, |_| 1.0).unwrap();
        assert_eq!(r, 0.0);

        let r = policy_radius(Divergence::Kl, rows(), |_, _| 0.5, |_| 0.5).unwrap();
        assert_abs_diff_eq!(r, std::f64::consts::LN_2, epsilon = 1e-12);

        let r = policy_radius(
            Divergence::Tv,
            rows(),
            |a, _| if a == 1 { 1.0 } else { 0.0 },
            |x| if x[0] == 0.0 { 0.25 } else { 0.75 },
        )
        .unwrap();
        assert_abs_diff_eq!(r, 0.5, epsilon = 1e-15);

        let empty: Vec<&[f64]> = Vec::new();
        assert!(policy_radius(Divergence::Tv, empty, |_, _| 0.5, |_| 0.5).is_err());
        assert!(policy_radius(Divergence::Tv, rows(), |_, _| 0.7, |_| 0.5).is_err());
    }

    #[test]
    fn names_round_trip() {
        for div in Divergence::ALL {
            assert_eq!(div.name().parse::<Divergence>().unwrap(), div);
        }
    }
}
