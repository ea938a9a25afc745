//! Layering of command-line flags and a TOML config file; the file wins.

use std::path::Path;

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

/// Tables of the config file that are not part of the run settings.
const SECTIONS: [&str; 3] = ["simulate", "figure", "audit"];

/// A parsed config file split into run settings and per-command sections.
#[derive(Debug, Default)]
pub struct ConfigFile {
    pub run: Table,
    pub sections: Table,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let mut run: Table = text.parse().with_context(|| format!("{} is not valid TOML", path.display()))?;
        let mut sections = Table::new();
        for name in SECTIONS {
            if let Some(v) = run.remove(name) {
                sections.insert(name.to_string(), v);
            }
        }
        Ok(ConfigFile { run, sections })
    }

    pub fn section(&self, name: &str) -> Result<Table> {
        match self.sections.get(name) {
            None => Ok(Table::new()),
            Some(Value::Table(t)) => Ok(t.clone()),
            Some(_) => anyhow::bail!("config key '{name}' must be a table"),
        }
    }
}

/// `base` with every key present in `over` replaced, recursing into tables.
pub fn overlay<T: Serialize + DeserializeOwned>(base: &T, over: &Table) -> Result<T> {
    let mut merged = Table::try_from(base).context("settings do not serialise to TOML")?;
    merge(&mut merged, over);
    Value::Table(merged).try_into().context("invalid config file")
}

fn merge(dst: &mut Table, src: &Table) {
    for (k, v) in src {
        match (dst.get_mut(k), v) {
            // a tagged enum is replaced wholesale so stale variant fields do not linger
            (Some(Value::Table(d)), Value::Table(s)) if !s.contains_key("kind") => merge(d, s),
            _ => {
                dst.insert(k.clone(), v.clone());
            }
        }
    }
}

/// Settings of the `simulate` command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub n: usize,
    pub d: usize,
    pub seed: u64,
    /// Seed of the structural weights, shared with the figure runs.
    pub scm_seed: u64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig { n: 1000, d: 5, seed: 0, scm_seed: 0 }
    }
}
