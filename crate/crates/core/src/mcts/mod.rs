//! Tree-parallel Monte Carlo tree search for single-player score
//! maximization.
//!
//! Each simulation descends from the root by PUCT selection over node-local
//! max-min normalized values, expands the first unexpanded node it reaches,
//! rolls out from there, and backs the return up the path. Workers share one
//! tree; virtual loss keeps concurrent descents apart.

mod config;
mod episode;
mod eval;
mod node;
mod rollout;
mod search;
mod stats;

pub use config::{RolloutMode, SearchConfig};
pub use episode::{play_episode, write_telemetry, Episode, EpisodeStep, MoveStats, MoveTelemetry};
pub use eval::{eval_queue, EvalClient, EvalServer, QueueStats};
pub use node::{backpropagate, SearchNode, TreeAudit};
pub use rollout::{playout, rollout};
pub use search::{search, search_tree, RootEdge, SearchResult};
pub use stats::{
    argmax_random_tie, dirichlet, dirichlet_mix, effective_value, normalize_value, normalize_values, puct_bonus,
    puct_scores, select_index, virtual_loss, EdgeStats, NormalizationMode, SelectParams,
};
