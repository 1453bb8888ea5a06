//! SameGame rules: board representation, groups, move application, scoring,
//! random generation, the network input encoding, and file formats.

mod board;
mod encode;
mod io;
mod replay;

pub use board::{
    generate_board, group_representative, Action, Board, BoardSeed, Cell, Group, MoveOutcome, Score, CLEAR_BONUS,
};
pub(crate) use board::{move_score, GroupScan};
pub use encode::{encode_board, EncodedBoard};
pub use io::{format_position, load_position_file, parse_position, save_position_file};
pub use replay::{read_episode_log, replay, write_episode_log, BoardSource, EpisodeRecord, Replay};
