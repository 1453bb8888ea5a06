//! Policy-guided, tree-parallel Monte-Carlo Tree Search for single-player
//! optimization, built around a SameGame engine.
//!
//! * [`samegame`]: rules, scoring, board generation and file formats.
//! * [`mcts`]: max-min normalized PUCT search with score-relative virtual
//!   loss over a shared, lock-protected tree.
//! * [`policy`]: the policy model interface, a convolutional softmax network
//!   trained with Adam, and gradient verification.
//! * [`training`]: generation-based policy iteration with replay buffers.
//! * [`cli`]: benchmark harness and command implementations behind the
//!   `pmcts` binary.
//!
//! The `book/` directory next to the workspace root walks through the
//! algorithms; its code listings are compiled and run as doctests.

pub mod cli;
pub mod error;
pub mod mcts;
pub mod policy;
pub mod pool;
pub mod samegame;
pub mod seeds;
pub mod training;

pub use error::{Error, Result};

/// The guide in `book/`, compiled so its examples stay in sync.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/samegame.md")]
    mod samegame {}
    #[doc = include_str!("../../../book/src/search.md")]
    mod search {}
    #[doc = include_str!("../../../book/src/policy.md")]
    mod policy {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
