use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Outcome functional whose interventional mean is bounded.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Phi {
    #[default]
    Identity,
    /// `1(y <= threshold)`.
    Indicator { threshold: f64 },
    /// Piecewise-linear map through `(y, phi)` knots, flat outside the knots.
    Table { knots: Vec<(f64, f64)> },
}

impl Phi {
    pub fn apply(&self, y: f64) -> f64 {
        match self {
            Phi::Identity => y,
            Phi::Indicator { threshold } => {
                if y <= *threshold {
                    1.0
                } else {
                    0.0
                }
            }
            Phi::Table { knots } => interpolate(knots, y),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Phi::Table { knots } = self {
            if knots.is_empty() {
                return Err(Error::Invalid("phi table needs at least one knot".into()));
            }
            if knots.windows(2).any(|w| !(w[0].0 < w[1].0)) {
                return Err(Error::Invalid("phi table knots must be strictly increasing in y".into()));
            }
        }
        Ok(())
    }
}

fn interpolate(knots: &[(f64, f64)], y: f64) -> f64 {
    let first = knots[0];
    let last = knots[knots.len() - 1];
    if y <= first.0 {
        return first.1;
    }
    if y >= last.0 {
        return last.1;
    }
    let idx = knots.partition_point(|k| k.0 <= y);
    let (x0, y0) = knots[idx - 1];
    let (x1, y1) = knots[idx];
    y0 + (y1 - y0) * (y - x0) / (x1 - x0)
}

/// Rows of `(X, A, Y)` with `X` stored row-major; `d = 0` is the marginal case.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    d: usize,
    x: Vec<f64>,
    a: Vec<u8>,
    y: Vec<f64>,
    pub phi: Phi,
}

impl Dataset {
    pub fn new(d: usize, x: Vec<f64>, a: Vec<u8>, y: Vec<f64>, phi: Phi) -> Result<Self> {
        let n = a.len();
        if y.len() != n || x.len() != n * d {
            return Err(Error::Invalid(format!(
                "inconsistent lengths: {} covariate values for d = {d}, {} treatments, {} outcomes",
                x.len(),
                n,
                y.len()
            )));
        }
        if let Some(i) = a.iter().position(|&v| v > 1) {
            return Err(Error::Invalid(format!("row {i}: treatment must be 0 or 1, got {}", a[i])));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("row {i}: non-finite outcome")));
        }
        if let Some(j) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("row {}: non-finite covariate", j / d.max(1))));
        }
        phi.validate()?;
        Ok(Dataset { d, x, a, y, phi })
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.n()).map(move |i| self.row(i))
    }

    pub fn covariates(&self) -> &[f64] {
        &self.x
    }

    pub fn treatments(&self) -> &[u8] {
        &self.a
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.y
    }

    pub fn phi_values(&self) -> Vec<f64> {
        self.y.iter().map(|&y| self.phi.apply(y)).collect()
    }

    pub fn arm_count(&self, arm: u8) -> usize {
        self.a.iter().filter(|&&v| v == arm).count()
    }

    pub fn has_both_arms(&self) -> bool {
        self.arm_count(0) > 0 && self.arm_count(1) > 0
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let mut x = Vec::with_capacity(idx.len() * self.d);
        for &i in idx {
            x.extend_from_slice(self.row(i));
        }
        Dataset {
            d: self.d,
            x,
            a: idx.iter().map(|&i| self.a[i]).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            phi: self.phi.clone(),
        }
    }

    pub fn with_phi(mut self, phi: Phi) -> Result<Self> {
        phi.validate()?;
        self.phi = phi;
        Ok(self)
    }

    /// Drops the covariates, keeping `(A, Y)`.
    pub fn marginal(&self) -> Dataset {
        Dataset {
            d: 0,
            x: Vec::new(),
            a: self.a.clone(),
            y: self.y.clone(),
            phi: self.phi.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi_variants() {
        assert_eq!(Phi::Identity.apply(2.5), 2.5);
        let ind = Phi::Indicator { threshold: 1.0 };
        assert_eq!(ind.apply(1.0), 1.0);
        assert_eq!(ind.apply(1.01), 0.0);
        let table = Phi::Table { knots: vec![(0.0, 0.0), (1.0, 2.0), (2.0, 2.0)] };
        assert_eq!(table.apply(-3.0), 0.0);
        assert_eq!(table.apply(0.5), 1.0);
        assert_eq!(table.apply(5.0), 2.0);
        assert!(Phi::Table { knots: vec![(1.0, 0.0), (0.0, 1.0)] }.validate().is_err());
    }

    #[test]
    fn rejects_inconsistent_rows() {
        assert!(Dataset::new(2, vec![0.0; 3], vec![0, 1], vec![0.0, 1.0], Phi::Identity).is_err());
        assert!(Dataset::new(1, vec![0.0; 2], vec![0, 2], vec![0.0, 1.0], Phi::Identity).is_err());
        assert!(Dataset::new(1, vec![0.0; 2], vec![0, 1], vec![0.0, f64::NAN], Phi::Identity).is_err());
    }

    #[test]
    fn subset_keeps_rows_aligned() {
        let ds = Dataset::new(2, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0], vec![0, 1, 1], vec![10.0, 11.0, 12.0], Phi::Identity).unwrap();
        let s = ds.subset(&[2, 0]);
        assert_eq!(s.row(0), &[4.0, 5.0]);
        assert_eq!(s.treatments(), &[1, 0]);
        assert_eq!(s.outcomes(), &[12.0, 10.0]);
        assert_eq!(ds.marginal().d(), 0);
        assert_eq!(ds.marginal().row(1), &[] as &[f64]);
    }
}
