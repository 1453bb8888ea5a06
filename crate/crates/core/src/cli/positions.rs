use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::bench::{Algorithm, Budget};
use crate::error::{Error, Result};
use crate::mcts::{play_episode, SearchConfig};
use crate::policy::Policy;
use crate::samegame::{load_position_file, replay, Action, Board, BoardSource, EpisodeRecord, Replay};

pub const POSITION_COUNT: usize = 20;

/// Published totals over the 20 positions, echoed for reference.
pub const PUBLISHED_PARALLEL_MCTS_TOTAL: i64 = 60_891;
pub const PUBLISHED_POLICY_MCTS_TOTAL: i64 = 78_072;

/// File name of position `i` (1-based): `position-01.txt` … `position-20.txt`.
pub fn position_file_name(i: usize) -> String {
    format!("position-{i:02}.txt")
}

/// Paths of all 20 positions in `dir`; errors naming every absent file.
pub fn position_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let paths: Vec<PathBuf> = (1..=POSITION_COUNT).map(|i| dir.join(position_file_name(i))).collect();
    let missing: Vec<String> = (1..=POSITION_COUNT)
        .filter(|&i| !paths[i - 1].is_file())
        .map(position_file_name)
        .collect();
    if !missing.is_empty() {
        return Err(Error::Usage(format!(
            "{} is missing {} of {POSITION_COUNT} positions: {}",
            dir.display(),
            missing.len(),
            missing.join(", ")
        )));
    }
    Ok(paths)
}

/// Always clears the largest group; ties go to the first in canonical order.
pub fn greedy_episode(start: &Board) -> Result<Replay> {
    let mut board = start.clone();
    let mut actions: Vec<Action> = Vec::new();
    loop {
        let mut groups: Vec<(usize, Action)> = board
            .find_groups()
            .iter()
            .map(|g| (g.len(), g.representative()))
            .collect();
        groups.sort_by_key(|&(_, a)| (a.row, a.col));
        // max_by_key keeps the last maximum, so scan in reverse
        let Some(&(_, a)) = groups.iter().rev().max_by_key(|&&(n, _)| n) else {
            break;
        };
        board = board.apply_action(a)?.next_board;
        actions.push(a);
    }
    replay(start, &actions)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PositionResult {
    /// 1-based position number.
    pub position: usize,
    pub score: i64,
    pub greedy_score: i64,
    pub moves: usize,
    pub simulations: u64,
    pub wall_time_ms: f64,
    #[serde(skip)]
    pub record: EpisodeRecord,
}

/// Search settings the published comparison used: `c_puct` 10 with 80
/// threads for plain MCTS, 5 with 120 threads for the policy variants.
pub fn position_search_config(algorithm: Algorithm) -> SearchConfig {
    let (c_puct, threads) = if algorithm.needs_model() {
        (5.0, 120)
    } else {
        (10.0, 80)
    };
    SearchConfig {
        c_puct,
        threads,
        rollout_mode: algorithm.rollout_mode(),
        ..SearchConfig::default()
    }
}

/// One run per position. `search` supplies everything except the budget and
/// rollout mode.
pub fn run_positions(
    dir: &Path,
    colors: u8,
    algorithm: Algorithm,
    budget: Budget,
    search: &SearchConfig,
    model: &Policy,
    on_result: &mut dyn FnMut(&PositionResult),
) -> Result<Vec<PositionResult>> {
    budget.validate()?;
    let policy = algorithm.policy(model)?;
    let paths = position_paths(dir)?;
    let mut out = Vec::with_capacity(paths.len());
    for (i, path) in paths.into_iter().enumerate() {
        let board = load_position_file(&path, colors)?;
        let mut cfg = search.clone();
        budget.apply(&mut cfg);
        cfg.rollout_mode = algorithm.rollout_mode();
        let episode = play_episode(&board, &cfg, &policy)?;
        episode.verify()?;
        let record = episode.to_record(BoardSource::Position {
            path,
            num_colors: colors,
        });
        record.verify(&board)?;
        let result = PositionResult {
            position: i + 1,
            score: episode.final_score,
            greedy_score: greedy_episode(&board)?.total,
            moves: episode.steps.len(),
            simulations: episode.totals().simulations,
            wall_time_ms: episode.totals().wall_time_ms,
            record,
        };
        on_result(&result);
        out.push(result);
    }
    Ok(out)
}

pub fn format_positions_report(algorithm: Algorithm, results: &[PositionResult]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>8} {:>10} {:>10} {:>6}",
        "position",
        algorithm.name(),
        "greedy",
        "moves"
    );
    for r in results {
        let _ = writeln!(
            s,
            "{:>8} {:>10} {:>10} {:>6}",
            r.position, r.score, r.greedy_score, r.moves
        );
    }
    let total: i64 = results.iter().map(|r| r.score).sum();
    let greedy: i64 = results.iter().map(|r| r.greedy_score).sum();
    let _ = writeln!(s, "{:>8} {:>10} {:>10}", "total", total, greedy);
    let _ = writeln!(
        s,
        "published totals for reference: Parallel-MCTS {}, Policy-MCTS {}",
        thousands(PUBLISHED_PARALLEL_MCTS_TOTAL),
        thousands(PUBLISHED_POLICY_MCTS_TOTAL)
    );
    s
}

fn thousands(n: i64) -> String {
    let digits = n.unsigned_abs().to_string();
    let mut out = String::new();
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    if n < 0 {
        out.insert(0, '-');
    }
    out
}
