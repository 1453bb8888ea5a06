//! Generation-based policy iteration.
//!
//! Each generation plays a batch of episodes with the previous policy (the
//! uniform policy first, with a larger search budget), adds the committed
//! state-action pairs to bounded training and validation buffers, and trains
//! a freshly initialized network on them.

mod buffer;
mod config;
mod generation;
mod pipeline;

pub use crate::mcts::dirichlet_mix;
pub use buffer::{split_and_append, split_point, ReplayBuffer, SampleTag, TaggedSample};
pub use config::{BoardSpec, GenerationConfig, NetworkPreset, NetworkSpec, PRESETS};
pub use generation::{
    episode_board, generation_seed, mean_std, run_generation, Buffers, GenerationOutput, GenerationReport,
};
pub use pipeline::{generation_dir, train_pipeline, PipelineOutcome};
