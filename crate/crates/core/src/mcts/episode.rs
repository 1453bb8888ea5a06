use std::io::Write;

use serde::{Deserialize, Serialize};

use super::config::SearchConfig;
use super::node::SearchNode;
use super::search::{search_tree, SearchResult};
use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::samegame::{replay, Action, Board, BoardSource, EpisodeRecord, Score};
use crate::seeds::derive_seed;

/// Search counters for one committed move.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MoveStats {
    pub simulations: u64,
    pub expansions: u64,
    pub leaf_expansions: u64,
    pub policy_fallbacks: u64,
    pub wall_time_ms: f64,
}

impl MoveStats {
    fn from_result(r: &SearchResult) -> MoveStats {
        MoveStats {
            simulations: r.simulations,
            expansions: r.expansions,
            leaf_expansions: r.leaf_expansions,
            policy_fallbacks: r.policy_fallbacks,
            wall_time_ms: r.wall_time_ms,
        }
    }

    pub fn add(&mut self, other: &MoveStats) {
        self.simulations += other.simulations;
        self.expansions += other.expansions;
        self.leaf_expansions += other.leaf_expansions;
        self.policy_fallbacks += other.policy_fallbacks;
        self.wall_time_ms += other.wall_time_ms;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeStep {
    /// State the search ran from.
    pub state: Board,
    pub action: Action,
    pub move_score: Score,
    pub stats: MoveStats,
}

/// A played game: one search per committed move.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub start: Board,
    pub steps: Vec<EpisodeStep>,
    pub terminal_adjustment: Score,
    pub final_score: Score,
}

impl Episode {
    pub fn actions(&self) -> Vec<Action> {
        self.steps.iter().map(|s| s.action).collect()
    }

    pub fn totals(&self) -> MoveStats {
        let mut t = MoveStats::default();
        for s in &self.steps {
            t.add(&s.stats);
        }
        t
    }

    /// Replays the actions through the engine and checks the score.
    pub fn verify(&self) -> Result<()> {
        let r = replay(&self.start, &self.actions())?;
        if r.total != self.final_score {
            return Err(Error::ReplayMismatch {
                recorded: self.final_score,
                replayed: r.total,
            });
        }
        Ok(())
    }

    pub fn to_record(&self, source: BoardSource) -> EpisodeRecord {
        EpisodeRecord {
            source,
            actions: self.steps.iter().map(|s| (s.action.row, s.action.col)).collect(),
            move_scores: self.steps.iter().map(|s| s.move_score).collect(),
            terminal_adjustment: self.terminal_adjustment,
            final_score: self.final_score,
        }
    }
}

/// One line of per-move telemetry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MoveTelemetry {
    #[serde(rename = "move")]
    pub index: usize,
    pub action: Action,
    pub move_score: Score,
    #[serde(flatten)]
    pub stats: MoveStats,
}

/// Writes one JSON line per move.
pub fn write_telemetry<W: Write>(episode: &Episode, mut out: W) -> Result<()> {
    for (index, s) in episode.steps.iter().enumerate() {
        let line = MoveTelemetry {
            index,
            action: s.action,
            move_score: s.move_score,
            stats: s.stats.clone(),
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Plays from `start` to the end, committing the best action of a search
/// per move. Each move's search is seeded from `cfg.seed` and the move
/// index. A terminal start gives an empty episode.
pub fn play_episode(start: &Board, cfg: &SearchConfig, policy: &Policy) -> Result<Episode> {
    cfg.validate()?;
    let mut board = start.clone();
    let mut steps = Vec::new();
    let mut total = 0;
    let mut reused: Option<Box<SearchNode>> = None;
    while !board.is_terminal() {
        let root = match reused.take() {
            Some(node) => node,
            None => Box::new(SearchNode::new(board.clone())),
        };
        let move_cfg = SearchConfig {
            seed: derive_seed(cfg.seed, steps.len() as u64),
            ..cfg.clone()
        };
        let result = search_tree(&root, &move_cfg, policy)?;
        let action = result.best_action;
        let out = board.apply_action(action)?;
        if cfg.reuse_tree {
            let mut root = root;
            let edge = root
                .actions()
                .iter()
                .position(|&a| a == action)
                .expect("best action is a root edge");
            reused = root.take_child(edge).filter(|c| !c.is_terminal());
        }
        total += out.move_score;
        steps.push(EpisodeStep {
            state: board,
            action,
            move_score: out.move_score,
            stats: MoveStats::from_result(&result),
        });
        board = out.next_board;
    }
    let terminal_adjustment = board.terminal_adjustment();
    Ok(Episode {
        start: start.clone(),
        steps,
        terminal_adjustment,
        final_score: total + terminal_adjustment,
    })
}
