use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcts::{play_episode, Episode, RolloutMode, SearchConfig};
use crate::policy::Policy;
use crate::pool::parallel_map;
use crate::samegame::{Board, BoardSeed, BoardSource};
use crate::seeds::derive_seed;

/// Two-sided 99% normal quantile.
pub const Z_99: f64 = 2.576;

const TAG_BOARDS: u64 = 0xB0A2D;
const TAG_RUNS: u64 = 0x2C45;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Uniform priors, random rollouts.
    PlainMcts,
    /// Policy priors, random rollouts.
    PolicyMctsRandom,
    /// Policy priors, policy-sampled rollouts.
    PolicyMctsGuided,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [
        Algorithm::PlainMcts,
        Algorithm::PolicyMctsRandom,
        Algorithm::PolicyMctsGuided,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::PlainMcts => "plain-mcts",
            Algorithm::PolicyMctsRandom => "policy-mcts-random",
            Algorithm::PolicyMctsGuided => "policy-mcts-guided",
        }
    }

    pub fn needs_model(self) -> bool {
        self != Algorithm::PlainMcts
    }

    pub fn rollout_mode(self) -> RolloutMode {
        match self {
            Algorithm::PolicyMctsGuided => RolloutMode::PolicyGuided,
            _ => RolloutMode::Random,
        }
    }

    /// The policy this algorithm searches with; errors when it needs a model
    /// and none was given.
    pub fn policy(self, model: &Policy) -> Result<Policy> {
        match (self.needs_model(), model) {
            (false, _) => Ok(Policy::Uniform),
            (true, Policy::Model(_)) => Ok(model.clone()),
            (true, Policy::Uniform) => Err(Error::Usage(format!("{} needs a trained model (--model)", self.name()))),
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Search effort per committed move.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    Simulations(u64),
    /// Wall-clock seconds.
    Seconds(f64),
}

impl Budget {
    pub fn validate(self) -> Result<()> {
        match self {
            Budget::Simulations(0) => Err(Error::Usage("a budget of 0 simulations cannot choose a move".into())),
            Budget::Seconds(s) if !(s > 0.0 && s.is_finite()) => {
                Err(Error::Usage(format!("time budget must be positive, got {s} s")))
            }
            _ => Ok(()),
        }
    }

    /// Applies the budget to a search config.
    pub fn apply(self, cfg: &mut SearchConfig) {
        match self {
            Budget::Simulations(k) => {
                cfg.simulations = k;
                cfg.time_budget_ms = None;
            }
            Budget::Seconds(s) => cfg.time_budget_ms = Some(((s * 1e3).round() as u64).max(1)),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum BoardSet {
    /// `count` boards generated from the spec seed.
    Seeded {
        count: usize,
        width: usize,
        height: usize,
        colors: u8,
    },
    Files {
        paths: Vec<PathBuf>,
        colors: u8,
    },
}

impl BoardSet {
    pub fn len(&self) -> usize {
        match self {
            BoardSet::Seeded { count, .. } => *count,
            BoardSet::Files { paths, .. } => paths.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkSpec {
    pub boards: BoardSet,
    pub runs: usize,
    pub algorithms: Vec<Algorithm>,
    pub budget: Budget,
    /// Search threads for plain MCTS.
    pub plain_threads: usize,
    /// Search threads for both policy variants.
    pub policy_threads: usize,
    /// Everything else a search needs; budget, threads, rollout mode and
    /// seed are overwritten per run.
    pub search: SearchConfig,
    pub seed: u64,
    /// Episodes played concurrently within one grid cell.
    pub workers: usize,
}

impl BenchmarkSpec {
    /// 500 seeded boards, 5 runs each, all three algorithms, 16 threads for
    /// plain MCTS and 100 for the policy variants.
    pub fn new(width: usize, height: usize, colors: u8, budget: Budget) -> BenchmarkSpec {
        BenchmarkSpec {
            boards: BoardSet::Seeded {
                count: 500,
                width,
                height,
                colors,
            },
            runs: 5,
            algorithms: Algorithm::ALL.to_vec(),
            budget,
            plain_threads: 16,
            policy_threads: 100,
            search: SearchConfig::default(),
            seed: 0,
            workers: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.boards.is_empty() || self.runs == 0 {
            return Err(Error::Usage("board count and runs per board must be at least 1".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::Usage("at least one algorithm is required".into()));
        }
        if self.plain_threads == 0 || self.policy_threads == 0 || self.workers == 0 {
            return Err(Error::Usage("thread and worker counts must be at least 1".into()));
        }
        self.budget.validate()
    }

    pub fn board_source(&self, board_id: usize) -> BoardSource {
        match &self.boards {
            BoardSet::Seeded {
                width, height, colors, ..
            } => BoardSource::from_seed(&benchmark_board(self.seed, board_id, *width, *height, *colors)),
            BoardSet::Files { paths, colors } => BoardSource::Position {
                path: paths[board_id].clone(),
                num_colors: *colors,
            },
        }
    }

    /// Search config of one run. The seed depends on board and run only, so
    /// every algorithm meets the same boards with the same seeds.
    pub fn search_config(&self, algorithm: Algorithm, board_id: usize, run_id: usize) -> SearchConfig {
        let mut cfg = self.search.clone();
        self.budget.apply(&mut cfg);
        cfg.threads = if algorithm.needs_model() {
            self.policy_threads
        } else {
            self.plain_threads
        };
        cfg.rollout_mode = algorithm.rollout_mode();
        cfg.seed = derive_seed(
            derive_seed(derive_seed(self.seed, TAG_RUNS), board_id as u64),
            run_id as u64,
        );
        cfg
    }
}

/// Board `id` of the seeded benchmark set. Training boards come from a
/// different derivation, so the set is held out.
pub fn benchmark_board(seed: u64, id: usize, width: usize, height: usize, colors: u8) -> BoardSeed {
    let s = derive_seed(derive_seed(seed, TAG_BOARDS), id as u64);
    BoardSeed::new(s, width, height, colors)
}

/// One CSV line. Columns, in order: `algorithm, board_id, run_id, score,
/// simulations, expansions, leaf_expansions, wall_time_ms`. Counters are
/// episode totals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub algorithm: Algorithm,
    pub board_id: usize,
    pub run_id: usize,
    pub score: i64,
    pub simulations: u64,
    pub expansions: u64,
    pub leaf_expansions: u64,
    pub wall_time_ms: f64,
}

impl BenchmarkRow {
    fn from_episode(algorithm: Algorithm, board_id: usize, run_id: usize, episode: &Episode) -> BenchmarkRow {
        let t = episode.totals();
        BenchmarkRow {
            algorithm,
            board_id,
            run_id,
            score: episode.final_score,
            simulations: t.simulations,
            expansions: t.expansions,
            leaf_expansions: t.leaf_expansions,
            wall_time_ms: t.wall_time_ms,
        }
    }
}

/// Plays the full grid: algorithms in order, then boards, then runs. Every
/// score is replayed through the engine before it is returned.
pub fn run_benchmark(
    spec: &BenchmarkSpec,
    model: &Policy,
    on_row: &mut dyn FnMut(&BenchmarkRow),
) -> Result<Vec<BenchmarkRow>> {
    spec.validate()?;
    let policies = spec
        .algorithms
        .iter()
        .map(|a| a.policy(model))
        .collect::<Result<Vec<_>>>()?;
    let boards: Vec<Board> = (0..spec.boards.len())
        .map(|i| spec.board_source(i).load())
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (&algorithm, policy) in spec.algorithms.iter().zip(&policies) {
        let cell = parallel_map(boards.len() * spec.runs, spec.workers, |i| {
            let (board_id, run_id) = (i / spec.runs, i % spec.runs);
            let start = &boards[board_id];
            let episode = play_episode(start, &spec.search_config(algorithm, board_id, run_id), policy)?;
            episode.verify()?;
            Ok(BenchmarkRow::from_episode(algorithm, board_id, run_id, &episode))
        })?;
        for row in cell {
            on_row(&row);
            rows.push(row);
        }
    }
    Ok(rows)
}

pub fn write_csv<W: Write>(rows: &[BenchmarkRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record([
            "algorithm",
            "board_id",
            "run_id",
            "score",
            "simulations",
            "expansions",
            "leaf_expansions",
            "wall_time_ms",
        ])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<BenchmarkRow>> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Per-algorithm aggregate of a benchmark.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub algorithm: Algorithm,
    pub runs: usize,
    pub mean_score: f64,
    /// Half-width of the 99% normal-approximation interval.
    pub ci99: f64,
    pub mean_simulations: f64,
    pub mean_expansions: f64,
    pub mean_leaf_expansions: f64,
    pub mean_wall_time_ms: f64,
}

/// Mean and 99% half-width with the sample standard deviation.
pub fn mean_ci99(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Z_99 * (var / n).sqrt())
}

pub fn summarize(rows: &[BenchmarkRow]) -> Vec<Summary> {
    let mut order: Vec<Algorithm> = Vec::new();
    for r in rows {
        if !order.contains(&r.algorithm) {
            order.push(r.algorithm);
        }
    }
    order
        .into_iter()
        .map(|a| {
            let cell: Vec<&BenchmarkRow> = rows.iter().filter(|r| r.algorithm == a).collect();
            let n = cell.len() as f64;
            let mean_of = |f: fn(&BenchmarkRow) -> f64| cell.iter().map(|r| f(r)).sum::<f64>() / n;
            let scores: Vec<f64> = cell.iter().map(|r| r.score as f64).collect();
            let (mean_score, ci99) = mean_ci99(&scores);
            Summary {
                algorithm: a,
                runs: cell.len(),
                mean_score,
                ci99,
                mean_simulations: mean_of(|r| r.simulations as f64),
                mean_expansions: mean_of(|r| r.expansions as f64),
                mean_leaf_expansions: mean_of(|r| r.leaf_expansions as f64),
                mean_wall_time_ms: mean_of(|r| r.wall_time_ms),
            }
        })
        .collect()
}

pub fn format_summary(summaries: &[Summary]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<20} {:>6} {:>10} {:>9} {:>13} {:>12} {:>12} {:>12}",
        "algorithm", "runs", "mean", "±99%", "simulations", "expansions", "leaf exp.", "time ms"
    );
    for m in summaries {
        let _ = writeln!(
            s,
            "{:<20} {:>6} {:>10.1} {:>9.1} {:>13.1} {:>12.1} {:>12.1} {:>12.1}",
            m.algorithm.name(),
            m.runs,
            m.mean_score,
            m.ci99,
            m.mean_simulations,
            m.mean_expansions,
            m.mean_leaf_expansions,
            m.mean_wall_time_ms
        );
    }
    s
}

/// Paired comparison of two algorithms over matching (board, run) cells:
/// mean of `a − b` and its 99% half-width.
pub fn paired_difference(rows: &[BenchmarkRow], a: Algorithm, b: Algorithm) -> Result<(f64, f64)> {
    let score = |alg: Algorithm, board: usize, run: usize| {
        rows.iter()
            .find(|r| r.algorithm == alg && r.board_id == board && r.run_id == run)
            .map(|r| r.score as f64)
    };
    let diffs = rows
        .iter()
        .filter(|r| r.algorithm == a)
        .map(|r| {
            score(b, r.board_id, r.run_id)
                .map(|sb| r.score as f64 - sb)
                .ok_or_else(|| Error::Usage(format!("no {b} run for board {} run {}", r.board_id, r.run_id)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(mean_ci99(&diffs))
}
