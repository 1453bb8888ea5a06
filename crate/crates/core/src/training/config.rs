use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcts::{RolloutMode, SearchConfig};
use crate::policy::{ConvLayerSpec, ConvPolicyConfig, TrainOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoardSpec {
    pub width: usize,
    pub height: usize,
    pub colors: u8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkPreset {
    /// Thirteen 64-filter layers.
    Full,
    /// Four layers of `filters` filters.
    Reduced,
    /// Two small layers.
    Tiny,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub preset: NetworkPreset,
    /// Filter count of the reduced preset.
    #[serde(default = "default_filters")]
    pub filters: usize,
    /// Explicit layer list; overrides the preset when non-empty.
    #[serde(default)]
    pub layers: Vec<ConvLayerSpec>,
}

fn default_filters() -> usize {
    16
}

impl NetworkSpec {
    pub fn build(&self, board: &BoardSpec, seed: u64) -> ConvPolicyConfig {
        let (h, w, c) = (board.height, board.width, board.colors);
        let mut cfg = match self.preset {
            NetworkPreset::Full => ConvPolicyConfig::full(h, w, c, seed),
            NetworkPreset::Reduced => ConvPolicyConfig::reduced(h, w, c, self.filters, seed),
            NetworkPreset::Tiny => ConvPolicyConfig::tiny(h, w, c, seed),
        };
        if !self.layers.is_empty() {
            cfg.layers = self.layers.clone();
        }
        cfg
    }
}

/// Everything a training run needs. Generations, runs, simulations, `c_puct`
/// and `α` follow the per-board-size presets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationConfig {
    pub generations: usize,
    pub runs_per_generation: usize,
    /// Simulations per move (`k`).
    pub simulations: u64,
    pub c_puct: f64,
    pub dirichlet_alpha: f64,
    pub dirichlet_epsilon: f64,
    pub training_capacity: usize,
    pub validation_capacity: usize,
    /// Fraction of each generation's samples that go to training (`λ`).
    pub split: f64,
    /// Simulation multiplier for the first generation.
    pub jump_start: u64,
    pub seed: u64,
    /// Search threads inside one episode.
    pub threads_per_run: usize,
    /// Episodes played concurrently; 0 means one per available core.
    pub workers: usize,
    pub rollout_mode: RolloutMode,
    pub virtual_loss_weight: f64,
    /// Write each generation's new samples to its checkpoint directory, which
    /// makes the run resumable. Large at full scale.
    pub buffer_snapshots: bool,
    pub board: BoardSpec,
    pub network: NetworkSpec,
    pub train: TrainOptions,
}

/// Preset names accepted by [`GenerationConfig::preset`].
pub const PRESETS: [&str; 4] = ["7x7", "10x10", "15x15", "desk-7x7"];

const TOP_KEYS: &[&str] = &[
    "preset",
    "generations",
    "runs_per_generation",
    "simulations",
    "c_puct",
    "dirichlet_alpha",
    "dirichlet_epsilon",
    "training_capacity",
    "validation_capacity",
    "split",
    "jump_start",
    "seed",
    "threads_per_run",
    "workers",
    "rollout_mode",
    "virtual_loss_weight",
    "buffer_snapshots",
    "board",
    "network",
    "train",
];
const BOARD_KEYS: &[&str] = &["width", "height", "colors"];
const NETWORK_KEYS: &[&str] = &["preset", "filters", "layers"];
const TRAIN_KEYS: &[&str] = &["batch_size", "learning_rate", "patience", "max_epochs", "seed"];

impl GenerationConfig {
    fn sized(d: usize, generations: usize, runs: usize, sims: u64, c_puct: f64, alpha: f64) -> GenerationConfig {
        GenerationConfig {
            generations,
            runs_per_generation: runs,
            simulations: sims,
            c_puct,
            dirichlet_alpha: alpha,
            dirichlet_epsilon: 0.25,
            training_capacity: 1_500_000,
            validation_capacity: 150_000,
            split: 0.9,
            jump_start: 4,
            seed: 0,
            threads_per_run: 1,
            workers: 0,
            rollout_mode: RolloutMode::PolicyGuided,
            virtual_loss_weight: 0.01,
            buffer_snapshots: true,
            board: BoardSpec {
                width: d,
                height: d,
                colors: 5,
            },
            network: NetworkSpec {
                preset: NetworkPreset::Full,
                filters: 64,
                layers: Vec::new(),
            },
            train: TrainOptions::default(),
        }
    }

    /// A named preset: `7x7`, `10x10`, `15x15`, or the scaled-down
    /// `desk-7x7`.
    pub fn preset(name: &str) -> Result<GenerationConfig> {
        Ok(match name {
            "7x7" => Self::sized(7, 50, 20_000, 100, 30.0, 0.75),
            "10x10" => Self::sized(10, 50, 10_000, 50, 4.0, 0.40),
            "15x15" => Self::sized(15, 66, 5_000, 25, 2.0, 0.25),
            "desk-7x7" => GenerationConfig {
                generations: 3,
                runs_per_generation: 300,
                simulations: 50,
                training_capacity: 15_000,
                validation_capacity: 1_500,
                network: NetworkSpec {
                    preset: NetworkPreset::Reduced,
                    filters: 16,
                    layers: Vec::new(),
                },
                ..Self::sized(7, 50, 20_000, 100, 30.0, 0.75)
            },
            other => {
                return Err(Error::Config(format!(
                    "unknown preset {other:?}; expected one of {}",
                    PRESETS.join(", ")
                )))
            }
        })
    }

    /// Parses a TOML config. An optional `preset` key supplies every field;
    /// the other keys override it. All unknown keys are reported together.
    pub fn from_toml(text: &str) -> Result<GenerationConfig> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(format!("malformed config: {}", e.message())))?;
        let unknown = unknown_keys(&table);
        if !unknown.is_empty() {
            return Err(Error::Config(format!("unknown config keys: {}", unknown.join(", "))));
        }
        let base = match table.remove("preset") {
            Some(toml::Value::String(name)) => GenerationConfig::preset(&name)?,
            Some(_) => return Err(Error::Config("preset must be a string".into())),
            None => GenerationConfig::preset("desk-7x7")?,
        };
        let mut merged =
            toml::Table::try_from(&base).map_err(|e| Error::Config(format!("cannot serialize preset: {e}")))?;
        merge(&mut merged, table);
        let cfg: GenerationConfig = merged
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("invalid config: {}", e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<GenerationConfig> {
        let text = std::fs::read_to_string(path)?;
        GenerationConfig::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.split > 0.0 && self.split < 1.0) {
            bad.push("split must lie strictly between 0 and 1");
        }
        if self.training_capacity == 0 || self.validation_capacity == 0 {
            bad.push("buffer capacities must be positive");
        }
        if self.runs_per_generation == 0 {
            bad.push("runs_per_generation must be at least 1");
        }
        if self.jump_start == 0 {
            bad.push("jump_start must be at least 1");
        }
        if self.train.batch_size == 0 || self.train.max_epochs == 0 {
            bad.push("train.batch_size and train.max_epochs must be positive");
        }
        if !bad.is_empty() {
            return Err(Error::Config(bad.join("; ")));
        }
        self.search_config(1, 0).validate()?;
        self.network.build(&self.board, 0).layout()?;
        Ok(())
    }

    /// Search settings for an episode of generation `g` (1-based).
    pub fn search_config(&self, generation: usize, seed: u64) -> SearchConfig {
        let sims = if generation == 1 {
            self.simulations * self.jump_start
        } else {
            self.simulations
        };
        SearchConfig {
            c_puct: self.c_puct,
            virtual_loss_weight: self.virtual_loss_weight,
            simulations: sims,
            rollout_mode: self.rollout_mode,
            threads: self.threads_per_run,
            dirichlet_alpha: Some(self.dirichlet_alpha),
            dirichlet_epsilon: self.dirichlet_epsilon,
            seed,
            ..SearchConfig::default()
        }
    }

    /// A run small enough for unit tests: 5×5 boards, 3 colors, the tiny
    /// network.
    #[cfg(test)]
    pub(crate) fn small() -> GenerationConfig {
        GenerationConfig {
            generations: 2,
            runs_per_generation: 6,
            simulations: 8,
            c_puct: 2.0,
            jump_start: 2,
            training_capacity: 120,
            validation_capacity: 20,
            workers: 2,
            seed: 7,
            board: BoardSpec {
                width: 5,
                height: 5,
                colors: 3,
            },
            network: NetworkSpec {
                preset: NetworkPreset::Tiny,
                filters: 4,
                layers: Vec::new(),
            },
            train: TrainOptions {
                batch_size: 16,
                max_epochs: 3,
                patience: 2,
                ..TrainOptions::default()
            },
            ..GenerationConfig::preset("desk-7x7").unwrap()
        }
    }

    pub(crate) fn worker_count(&self) -> usize {
        if self.workers > 0 {
            self.workers
        } else {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        }
    }
}

fn unknown_keys(table: &toml::Table) -> Vec<String> {
    let mut out = Vec::new();
    for (k, v) in table {
        if !TOP_KEYS.contains(&k.as_str()) {
            out.push(k.clone());
            continue;
        }
        let allowed = match k.as_str() {
            "board" => BOARD_KEYS,
            "network" => NETWORK_KEYS,
            "train" => TRAIN_KEYS,
            _ => continue,
        };
        if let toml::Value::Table(sub) = v {
            out.extend(
                sub.keys()
                    .filter(|s| !allowed.contains(&s.as_str()))
                    .map(|s| format!("{k}.{s}")),
            );
        }
    }
    out
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
