use std::io::{BufRead, Write};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::board::{generate_board, Action, Board, BoardSeed, Score};
use super::io::load_position_file;
use crate::error::{Error, Result};

/// Outcome of replaying an action list from a start position.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Replay {
    pub final_board: Board,
    pub move_scores: Vec<Score>,
    /// Zero unless the final board is terminal.
    pub terminal_adjustment: Score,
    pub total: Score,
}

pub fn replay(start: &Board, actions: &[Action]) -> Result<Replay> {
    let mut board = start.clone();
    let mut move_scores = Vec::with_capacity(actions.len());
    for &a in actions {
        let out = board.apply_action(a)?;
        move_scores.push(out.move_score);
        board = out.next_board;
    }
    let terminal_adjustment = if board.is_terminal() {
        board.terminal_adjustment()
    } else {
        0
    };
    let total = move_scores.iter().sum::<Score>() + terminal_adjustment;
    Ok(Replay {
        final_board: board,
        move_scores,
        terminal_adjustment,
        total,
    })
}

/// Where an episode's start position came from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoardSource {
    Seed {
        seed: u64,
        width: usize,
        height: usize,
        num_colors: u8,
    },
    Position {
        path: PathBuf,
        num_colors: u8,
    },
}

impl BoardSource {
    pub fn from_seed(seed: &BoardSeed) -> BoardSource {
        BoardSource::Seed {
            seed: seed.seed,
            width: seed.width,
            height: seed.height,
            num_colors: seed.num_colors,
        }
    }

    pub fn load(&self) -> Result<Board> {
        match self {
            BoardSource::Seed {
                seed,
                width,
                height,
                num_colors,
            } => generate_board(&BoardSeed::new(*seed, *width, *height, *num_colors)),
            BoardSource::Position { path, num_colors } => load_position_file(path, *num_colors),
        }
    }
}

/// One line of the episode log.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub source: BoardSource,
    pub actions: Vec<(usize, usize)>,
    pub move_scores: Vec<Score>,
    pub terminal_adjustment: Score,
    pub final_score: Score,
}

impl EpisodeRecord {
    pub fn actions(&self) -> Vec<Action> {
        self.actions.iter().map(|&(r, c)| Action::new(r, c)).collect()
    }

    /// Replays the actions from `start` and checks every recorded number.
    pub fn verify(&self, start: &Board) -> Result<()> {
        let r = replay(start, &self.actions())?;
        if r.total != self.final_score
            || r.move_scores != self.move_scores
            || r.terminal_adjustment != self.terminal_adjustment
        {
            return Err(Error::ReplayMismatch {
                recorded: self.final_score,
                replayed: r.total,
            });
        }
        Ok(())
    }
}

pub fn write_episode_log<W: Write>(mut out: W, records: &[EpisodeRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_episode_log<R: BufRead>(input: R) -> Result<Vec<EpisodeRecord>> {
    let mut records = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line)?);
    }
    Ok(records)
}
