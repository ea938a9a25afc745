use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Phi;
use crate::divergence::Divergence;
use crate::error::{Error, Result};
use crate::simulate::SyntheticScm;

use super::law::{exact_divergence, DiscreteLaw, Law};

/// Fully specified model with binary latent `U`, binary `A` and binary `Y`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinaryScm {
    /// `Pr(U = 1)`.
    pub p_u: f64,
    /// `Pr(A = 1 | U = u)`.
    pub p_a: [f64; 2],
    /// `Pr(Y = 1 | A = a, U = u)` indexed `[a][u]`.
    pub p_y: [[f64; 2]; 2],
}

/// Observational law, interventional law and propensity of one arm.
#[derive(Clone, Debug, PartialEq)]
pub struct ArmLaws {
    pub propensity: f64,
    pub observational: DiscreteLaw,
    pub interventional: DiscreteLaw,
}

impl BinaryScm {
    /// Exact laws of `Y | A = a` and `Y | do(A = a)`, summing over `U`.
    pub fn arm_laws(&self, arm: u8) -> Result<ArmLaws> {
        let a = usize::from(arm.min(1));
        let pu = [1.0 - self.p_u, self.p_u];
        let pa_given_u = |u: usize| if a == 1 { self.p_a[u] } else { 1.0 - self.p_a[u] };
        let joint: Vec<f64> = (0..2).map(|u| pu[u] * pa_given_u(u)).collect();
        let propensity = joint[0] + joint[1];
        if propensity <= 0.0 {
            return Err(Error::Positivity(format!("arm {arm} has zero probability")));
        }
        let obs_y1 = (joint[0] * self.p_y[a][0] + joint[1] * self.p_y[a][1]) / propensity;
        let int_y1 = pu[0] * self.p_y[a][0] + pu[1] * self.p_y[a][1];
        let law = |q: f64| DiscreteLaw::from_weights(vec![0.0, 1.0], vec![1.0 - q, q]);
        Ok(ArmLaws { propensity, observational: law(obs_y1)?, interventional: law(int_y1)? })
    }
}

/// Worst case of one audit sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub divergence: Divergence,
    pub checks: usize,
    pub violations: usize,
    /// Smallest `radius - divergence` seen; non-negative when every check passes.
    pub min_slack: f64,
}

/// Every combination of the grid values for the seven SCM probabilities.
pub fn binary_scm_grid(levels: &[f64]) -> Vec<BinaryScm> {
    let mut out = Vec::with_capacity(levels.len().pow(7));
    for &p_u in levels {
        for &a0 in levels {
            for &a1 in levels {
                for &y00 in levels {
                    for &y01 in levels {
                        for &y10 in levels {
                            for &y11 in levels {
                                out.push(BinaryScm { p_u, p_a: [a0, a1], p_y: [[y00, y01], [y10, y11]] });
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Checks `D_f(P_a || Q_a) <= radius_scale * B_f(e_a) + tol` over all models and both arms.
///
/// `radius_scale` below one is a negative control that should produce violations.
pub fn dpi_audit(div: Divergence, scms: &[BinaryScm], radius_scale: f64, tol: f64) -> Result<AuditSummary> {
    let mut summary = AuditSummary { divergence: div, checks: 0, violations: 0, min_slack: f64::INFINITY };
    for scm in scms {
        for arm in [0, 1] {
            let laws = scm.arm_laws(arm)?;
            let d = exact_divergence(div, &Law::Discrete(laws.observational), &Law::Discrete(laws.interventional), 0, 0)?;
            let slack = radius_scale * div.radius(laws.propensity)? - d.value;
            summary.checks += 1;
            summary.min_slack = summary.min_slack.min(slack);
            if slack < -tol {
                summary.violations += 1;
            }
        }
    }
    Ok(summary)
}

/// Interventional mean with its Monte Carlo standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub mean: f64,
    pub std_error: f64,
}

/// `E[phi(Y) | do(A = a), X = x]` at each point by simulation, one stream per point.
pub fn scm_ground_truth(
    scm: &SyntheticScm,
    a: u8,
    x_points: &[Vec<f64>],
    phi: &Phi,
    mc_draws: usize,
    seed: u64,
) -> Result<Vec<GroundTruth>> {
    if mc_draws < 10_000 {
        return Err(Error::Invalid(format!("ground truth needs at least 1e4 draws per point, got {mc_draws}")));
    }
    x_points
        .iter()
        .enumerate()
        .map(|(i, x)| {
            if x.len() != scm.d {
                return Err(Error::Invalid(format!("point {i} has {} coordinates, expected {}", x.len(), scm.d)));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let (mean, std_error) = scm.interventional_draws(a, x, phi, mc_draws, &mut rng);
            Ok(GroundTruth { mean, std_error })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arm_laws_are_consistent() {
        let scm = BinaryScm { p_u: 0.3, p_a: [0.2, 0.9], p_y: [[0.1, 0.6], [0.5, 0.95]] };
        let l1 = scm.arm_laws(1).unwrap();
        let l0 = scm.arm_laws(0).unwrap();
        assert!((l1.propensity + l0.propensity - 1.0).abs() < 1e-15);
        assert!((l1.propensity - (0.7 * 0.2 + 0.3 * 0.9)).abs() < 1e-15);
        assert!((l1.interventional.probs()[1] - (0.7 * 0.5 + 0.3 * 0.95)).abs() < 1e-15);
    }

    #[test]
    fn small_grid_has_no_violations_and_tamper_fails() {
        let grid = binary_scm_grid(&[0.1, 0.5, 0.9]);
        for div in Divergence::ALL {
            let ok = dpi_audit(div, &grid, 1.0, 1e-9).unwrap();
            assert_eq!(ok.violations, 0, "{div}");
            assert!(ok.min_slack >= -1e-9);
        }
        let tampered = dpi_audit(Divergence::Kl, &grid, 0.0, 1e-9).unwrap();
        assert!(tampered.violations > 0);
    }

    #[test]
    fn ground_truth_matches_quadrature() {
        let scm = SyntheticScm::default();
        let x = vec![vec![0.4, -0.3, 1.1, 0.0, -1.5]];
        let gt = scm_ground_truth(&scm, 1, &x, &Phi::Identity, 40_000, 3).unwrap();
        let exact = scm.interventional_mean(1, &x[0]);
        assert!((gt[0].mean - exact).abs() < 4.0 * gt[0].std_error, "{:?} vs {exact}", gt[0]);
    }
}
