//! Order-statistic aggregation of per-divergence intervals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundFamily {
    pub lowers: Vec<f64>,
    pub uppers: Vec<f64>,
    pub labels: Vec<String>,
}

impl BoundFamily {
    pub fn new(lowers: Vec<f64>, uppers: Vec<f64>, labels: Vec<String>) -> Result<Self> {
        if lowers.is_empty() || lowers.len() != uppers.len() || labels.len() != lowers.len() {
            return Err(Error::Invalid(format!(
                "bound family needs matching non-empty lists, got {} lowers, {} uppers, {} labels",
                lowers.len(),
                uppers.len(),
                labels.len()
            )));
        }
        if lowers.iter().chain(&uppers).any(|v| v.is_nan()) {
            return Err(Error::Invalid("bound family contains NaN".into()));
        }
        Ok(BoundFamily { lowers, uppers, labels })
    }

    /// Unlabelled family, convenient in tests.
    pub fn unlabelled(lowers: Vec<f64>, uppers: Vec<f64>) -> Result<Self> {
        let labels = (0..lowers.len()).map(|i| i.to_string()).collect();
        Self::new(lowers, uppers, labels)
    }

    pub fn len(&self) -> usize {
        self.lowers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lowers.is_empty()
    }
}

/// Aggregated interval with the `k` that produced it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub lo: f64,
    pub up: f64,
    pub k: usize,
    /// Set when even `k = n_f` leaves `lo > up`.
    pub crossed: bool,
}

/// `k`-th largest lower bound and `k`-th smallest upper bound.
pub fn k_agg(family: &BoundFamily, k: usize) -> Result<(f64, f64)> {
    let n = family.len();
    if k == 0 || k > n {
        return Err(Error::Invalid(format!("k = {k} outside 1..={n}")));
    }
    let mut lo = family.lowers.clone();
    let mut up = family.uppers.clone();
    lo.sort_by(|a, b| b.total_cmp(a));
    up.sort_by(f64::total_cmp);
    Ok((lo[k - 1], up[k - 1]))
}

/// Smallest `k` whose interval is not crossed; flags exhaustion instead of failing.
pub fn k_agg_auto(family: &BoundFamily) -> Aggregate {
    let n = family.len();
    for k in 1..=n {
        let (lo, up) = k_agg(family, k).expect("k in range");
        if lo <= up {
            return Aggregate { lo, up, k, crossed: false };
        }
    }
    let (lo, up) = k_agg(family, n).expect("k in range");
    Aggregate { lo, up, k: n, crossed: true }
}

/// One `k` shared by all points: the smallest that uncrosses every interval.
pub fn k_agg_global(families: &[BoundFamily]) -> Result<Vec<Aggregate>> {
    let Some(n) = families.first().map(BoundFamily::len) else {
        return Ok(Vec::new());
    };
    if families.iter().any(|f| f.len() != n) {
        return Err(Error::Invalid("global k needs families of equal size".into()));
    }
    let k = families.iter().map(|f| k_agg_auto(f).k).max().unwrap_or(1);
    families
        .iter()
        .map(|f| {
            let (lo, up) = k_agg(f, k)?;
            Ok(Aggregate { lo, up, k, crossed: lo > up })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fam(lo: &[f64], up: &[f64]) -> BoundFamily {
        BoundFamily::unlabelled(lo.to_vec(), up.to_vec()).unwrap()
    }

    #[test]
    fn definition_examples() {
        let f = fam(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]);
        assert_eq!(k_agg(&f, 1).unwrap(), (3.0, 4.0));
        assert_eq!(k_agg(&f, 3).unwrap(), (1.0, 6.0));
        assert!(k_agg(&f, 0).is_err());
        assert!(k_agg(&f, 4).is_err());
        let g = fam(&[1.0, 4.0, 2.0], &[3.0, 1.0, 5.0]);
        assert_eq!(k_agg(&g, 2).unwrap(), (2.0, 3.0));
    }

    #[test]
    fn auto_examples() {
        let g = fam(&[1.0, 4.0, 2.0], &[3.0, 1.0, 5.0]);
        assert_eq!(k_agg_auto(&g), Aggregate { lo: 2.0, up: 3.0, k: 2, crossed: false });
        let ok = fam(&[0.0, 1.0], &[2.0, 3.0]);
        assert_eq!(k_agg_auto(&ok).k, 1);
        let bad = fam(&[5.0, 5.0], &[1.0, 1.0]);
        assert_eq!(k_agg_auto(&bad), Aggregate { lo: 5.0, up: 1.0, k: 2, crossed: true });
    }

    #[test]
    fn global_k_uses_the_worst_point() {
        let fams = [fam(&[1.0, 4.0, 2.0], &[3.0, 1.0, 5.0]), fam(&[0.0, 0.0, 0.0], &[1.0, 1.0, 1.0])];
        let out = k_agg_global(&fams).unwrap();
        assert!(out.iter().all(|a| a.k == 2));
    }

    #[test]
    fn rejects_mismatched_lists() {
        assert!(BoundFamily::unlabelled(vec![1.0], vec![]).is_err());
        assert!(BoundFamily::unlabelled(vec![], vec![]).is_err());
    }
}
