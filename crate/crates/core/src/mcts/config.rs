use serde::{Deserialize, Serialize};

use super::stats::{NormalizationMode, SelectParams};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RolloutMode {
    /// Uniform over legal actions.
    #[default]
    Random,
    /// Sampled from the policy, renormalized over legal actions.
    PolicyGuided,
}

/// Search parameters. Every field has a default, so a config file only needs
/// the keys it changes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub c_puct: f64,
    pub virtual_loss_weight: f64,
    /// Simulations per search (`k`).
    pub simulations: u64,
    /// When set, search runs for this wall-clock time instead of a fixed
    /// simulation count.
    pub time_budget_ms: Option<u64>,
    pub rollout_mode: RolloutMode,
    pub threads: usize,
    /// Root noise concentration; `None` disables noise.
    pub dirichlet_alpha: Option<f64>,
    pub dirichlet_epsilon: f64,
    pub seed: u64,
    /// Keep the committed child's subtree for the next move.
    pub reuse_tree: bool,
    pub normalization: NormalizationMode,
    /// Largest batch the evaluation queue hands to the model.
    pub eval_batch_limit: usize,
    /// Longest a queued evaluation waits for its batch to fill.
    pub eval_timeout_us: u64,
}

impl Default for SearchConfig {
    fn default() -> SearchConfig {
        SearchConfig {
            c_puct: 1.0,
            virtual_loss_weight: 0.01,
            simulations: 100,
            time_budget_ms: None,
            rollout_mode: RolloutMode::Random,
            threads: 1,
            dirichlet_alpha: None,
            dirichlet_epsilon: 0.25,
            seed: 0,
            reuse_tree: false,
            normalization: NormalizationMode::MeanValues,
            eval_batch_limit: 64,
            eval_timeout_us: 2000,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.c_puct > 0.0 && self.c_puct.is_finite()) {
            bad.push("c_puct must be positive");
        }
        if !(self.virtual_loss_weight >= 0.0 && self.virtual_loss_weight.is_finite()) {
            bad.push("virtual_loss_weight must be non-negative");
        }
        if self.simulations == 0 && self.time_budget_ms.is_none() {
            bad.push("simulations must be at least 1");
        }
        if self.time_budget_ms == Some(0) {
            bad.push("time_budget_ms must be positive");
        }
        if self.threads == 0 {
            bad.push("threads must be at least 1");
        }
        if let Some(a) = self.dirichlet_alpha {
            if !(a > 0.0 && a.is_finite()) {
                bad.push("dirichlet_alpha must be positive");
            }
        }
        if !(0.0..=1.0).contains(&self.dirichlet_epsilon) {
            bad.push("dirichlet_epsilon must lie in [0, 1]");
        }
        if self.eval_batch_limit == 0 {
            bad.push("eval_batch_limit must be at least 1");
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }

    /// Parses a TOML search config; missing keys keep their defaults and
    /// every unknown key is named in the error.
    pub fn from_toml(text: &str) -> Result<SearchConfig> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(format!("malformed config: {}", e.message())))?;
        let unknown: Vec<&str> = table.keys().map(String::as_str).filter(|k| !KEYS.contains(k)).collect();
        if !unknown.is_empty() {
            return Err(Error::Config(format!("unknown config keys: {}", unknown.join(", "))));
        }
        let cfg: SearchConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("invalid config: {}", e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<SearchConfig> {
        let text = std::fs::read_to_string(path)?;
        SearchConfig::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn select_params(&self) -> SelectParams {
        SelectParams {
            c_puct: self.c_puct,
            virtual_loss_weight: self.virtual_loss_weight,
            normalization: self.normalization,
        }
    }
}

const KEYS: &[&str] = &[
    "c_puct",
    "virtual_loss_weight",
    "simulations",
    "time_budget_ms",
    "rollout_mode",
    "threads",
    "dirichlet_alpha",
    "dirichlet_epsilon",
    "seed",
    "reuse_tree",
    "normalization",
    "eval_batch_limit",
    "eval_timeout_us",
];
