//! Bounds on interventional means from propensity-driven f-divergence radii.
//!
//! The observational law `P(Y | A = a, X = x)` and the interventional law
//! `P(Y | do(A = a), X = x)` are at most `B_f(e_a(x))` apart in any of five
//! f-divergences, where `e_a` is the propensity score. Optimising a functional
//! of the outcome over that ball gives sharp lower and upper bounds, which are
//! estimated here through a convex dual program with cross-fitting.

pub mod aggregate;
pub mod config;
pub mod data;
pub mod divergence;
pub mod dual;
pub mod error;
pub mod experiment;
pub mod nuisance;
pub mod oracles;
pub mod quadrature;
pub mod simulate;

use serde::{Deserialize, Serialize};

pub use data::{Dataset, Phi};
pub use divergence::Divergence;
pub use error::{Error, Result};

/// Which end of the identified interval is computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Upper,
    Lower,
}

impl Direction {
    /// `+1` for the upper bound, `-1` for the lower bound.
    pub fn sign(self) -> f64 {
        match self {
            Direction::Upper => 1.0,
            Direction::Lower => -1.0,
        }
    }
}

/// Maps `f` over `items`, in parallel when the `parallel` feature is enabled.
#[cfg(feature = "parallel")]
pub fn par_map<T: Sync, R: Send, F: Fn(&T) -> R + Sync + Send>(items: &[T], f: F) -> Vec<R> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

/// Maps `f` over `items`, in parallel when the `parallel` feature is enabled.
#[cfg(not(feature = "parallel"))]
pub fn par_map<T: Sync, R: Send, F: Fn(&T) -> R + Sync + Send>(items: &[T], f: F) -> Vec<R> {
    items.iter().map(f).collect()
}
