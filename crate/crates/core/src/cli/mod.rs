//! Command implementations and the benchmark harness behind the `pmcts`
//! binary.
//!
//! Benchmark CSV columns, in order:
//!
//! ```text
//! algorithm,board_id,run_id,score,simulations,expansions,leaf_expansions,wall_time_ms
//! ```
//!
//! `algorithm` is `plain-mcts`, `policy-mcts-random` or `policy-mcts-guided`;
//! counters are totals over the episode; every score has been replayed
//! through the engine before it is written.

mod bench;
mod commands;
mod positions;

pub use bench::{
    benchmark_board, format_summary, mean_ci99, paired_difference, read_csv, run_benchmark, summarize, write_csv,
    Algorithm, BenchmarkRow, BenchmarkSpec, BoardSet, Budget, Summary, Z_99,
};
pub use commands::{exit_code, gradcheck_batch, run, Cli, Command, Common};
pub use positions::{
    format_positions_report, greedy_episode, position_file_name, position_paths, position_search_config, run_positions,
    PositionResult, POSITION_COUNT, PUBLISHED_PARALLEL_MCTS_TOTAL, PUBLISHED_POLICY_MCTS_TOTAL,
};
