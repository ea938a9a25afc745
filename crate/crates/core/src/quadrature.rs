//! Gauss-Hermite rules for expectations over a standard normal variable.

use nalgebra::{DMatrix, SymmetricEigen};

/// Nodes and weights such that `sum_i w_i f(z_i) ~= E[f(Z)]`, `Z ~ N(0, 1)`.
#[derive(Clone, Debug)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Golub-Welsch construction for the probabilists' Hermite polynomials.
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "quadrature order must be positive");
        let mut jacobi = DMatrix::<f64>::zeros(order, order);
        for k in 1..order {
            let b = (k as f64).sqrt();
            jacobi[(k - 1, k)] = b;
            jacobi[(k, k - 1)] = b;
        }
        let eig = SymmetricEigen::new(jacobi);
        let mut pairs: Vec<(f64, f64)> = (0..order)
            .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        GaussHermite {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1 / total).collect(),
        }
    }

    pub fn expect<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&z, &w)| w * f(z)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_moments_are_exact() {
        let gh = GaussHermite::new(20);
        assert!((gh.expect(|_| 1.0) - 1.0).abs() < 1e-13);
        assert!(gh.expect(|z| z).abs() < 1e-12);
        assert!((gh.expect(|z| z * z) - 1.0).abs() < 1e-12);
        assert!((gh.expect(|z| z.powi(4)) - 3.0).abs() < 1e-11);
        assert!((gh.expect(|z| z.powi(6)) - 15.0).abs() < 1e-10);
    }

    #[test]
    fn smooth_integrand() {
        // E[exp(Z)] = exp(1/2)
        let gh = GaussHermite::new(40);
        assert!((gh.expect(f64::exp) - 0.5f64.exp()).abs() < 1e-12);
    }
}
