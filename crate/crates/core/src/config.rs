//! Serializable run settings shared by the library and the command line.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::Phi;
use crate::divergence::Divergence;
use crate::error::{Error, Result};
use crate::nuisance::{NoiseScale, PropensityConfig, PseudoConfig};

/// Dual-network training settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub patience: usize,
    pub val_frac: f64,
    pub clip_h: f64,
    pub barrier_weight: f64,
    pub batch_size: usize,
    pub hidden: usize,
    /// Project conjugate arguments into the domain when forming pseudo-outcomes.
    pub project: bool,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            lr: 5e-4,
            weight_decay: 1e-4,
            epochs: 256,
            patience: 10,
            val_frac: 0.2,
            clip_h: 20.0,
            barrier_weight: 10.0,
            batch_size: 64,
            hidden: 64,
            project: true,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.weight_decay >= 0.0
            && self.epochs >= 1
            && self.val_frac > 0.0
            && self.val_frac < 1.0
            && self.clip_h > 0.0
            && self.barrier_weight >= 0.0
            && self.batch_size >= 1
            && self.hidden >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!("invalid optimiser settings {self:?}")))
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Marginal,
    Conditional,
}

/// How the aggregation order `k` is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KPolicy {
    #[default]
    PerPoint,
    Global,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub second_param: NoiseScale,
}

/// Everything needed to reproduce a bounds run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub divergences: Vec<Divergence>,
    pub phi: Phi,
    pub mode: Mode,
    pub folds: usize,
    pub debias: bool,
    pub seed: u64,
    pub k_policy: KPolicy,
    /// Number of query points taken from the data for conditional reports.
    pub query_points: usize,
    pub optim: OptimConfig,
    pub propensity: PropensityConfig,
    pub pseudo: PseudoConfig,
    pub noise: NoiseConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            divergences: Divergence::ALL.to_vec(),
            phi: Phi::Identity,
            mode: Mode::Marginal,
            folds: 2,
            debias: true,
            seed: 0,
            k_policy: KPolicy::PerPoint,
            query_points: 200,
            optim: OptimConfig::default(),
            propensity: PropensityConfig::default(),
            pseudo: PseudoConfig::default(),
            noise: NoiseConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.divergences.is_empty() {
            return Err(Error::Invalid("at least one divergence is required".into()));
        }
        let mut seen = self.divergences.clone();
        seen.sort_by_key(|d| d.name());
        seen.dedup();
        if seen.len() != self.divergences.len() {
            return Err(Error::Invalid("divergences must not repeat".into()));
        }
        if self.folds < 2 {
            return Err(Error::Invalid(format!("cross-fitting needs at least 2 folds, got {}", self.folds)));
        }
        if self.query_points == 0 {
            return Err(Error::Invalid("query_points must be positive".into()));
        }
        self.phi.validate()?;
        self.optim.validate()?;
        self.propensity.validate()?;
        self.pseudo.boost.validate()
    }

    /// SHA-256 of the canonical JSON encoding, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_hash_is_stable() {
        let c = RunConfig::default();
        c.validate().unwrap();
        assert_eq!(c.hash(), RunConfig::default().hash());
        let other = RunConfig { seed: 1, ..RunConfig::default() };
        assert_ne!(c.hash(), other.hash());
        assert_eq!(c.hash().len(), 64);
    }

    #[test]
    fn rejects_empty_and_repeated_divergences() {
        let empty = RunConfig { divergences: vec![], ..RunConfig::default() };
        assert!(empty.validate().is_err());
        let twice = RunConfig { divergences: vec![Divergence::Kl, Divergence::Kl], ..RunConfig::default() };
        assert!(twice.validate().is_err());
    }

    #[test]
    fn json_round_trip() {
        let c = RunConfig { mode: Mode::Conditional, k_policy: KPolicy::Global, ..RunConfig::default() };
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(c, back);
    }
}
