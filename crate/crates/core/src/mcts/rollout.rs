use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use super::config::RolloutMode;
use super::eval::Evaluator;
use super::node::SearchNode;
use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::samegame::{Board, GroupScan, Score};

/// Reusable per-worker buffers.
#[derive(Default)]
pub(crate) struct Scratch {
    scan: GroupScan,
    legal: Vec<usize>,
}

/// Plays from `board` to the end and returns the sum of move scores plus the
/// terminal adjustment. A board that is already terminal returns 0: its
/// adjustment belongs to the move that produced it. The second value counts
/// degenerate policy outputs that fell back to uniform.
pub(crate) fn playout_with<R: Rng + ?Sized>(
    board: &Board,
    mode: RolloutMode,
    eval: &Evaluator<'_>,
    rng: &mut R,
    scratch: &mut Scratch,
) -> Result<(Score, u64)> {
    let mut b = board.clone();
    let mut total = 0;
    let mut moved = false;
    let mut fallbacks = 0;
    loop {
        scratch.scan.run(&b);
        let groups = &scratch.scan.groups;
        if groups.is_empty() {
            return Ok((if moved { total + b.terminal_adjustment() } else { 0 }, fallbacks));
        }
        let pick = if mode == RolloutMode::Random || eval.is_uniform() {
            rng.random_range(0..groups.len())
        } else {
            scratch.legal.clear();
            scratch.legal.extend(groups.iter().map(|g| b.action_index(g.rep)));
            let priors = eval.priors(&b, &scratch.legal)?;
            fallbacks += priors.fell_back as u64;
            let weights = priors.legal_priors(&scratch.legal);
            WeightedIndex::new(&weights)
                .map_err(|_| Error::Contract("rollout priors are not a distribution"))?
                .sample(rng)
        };
        let g = groups[pick];
        total += crate::samegame::move_score(g.size);
        b.remove_label(&scratch.scan.labels, g.label);
        moved = true;
    }
}

/// Continues a game from `board` to its end; see [`rollout`].
pub fn playout<R: Rng + ?Sized>(board: &Board, mode: RolloutMode, policy: &Policy, rng: &mut R) -> Result<Score> {
    let eval = match policy {
        Policy::Uniform => Evaluator::Uniform,
        Policy::Model(m) => Evaluator::Direct(m.as_ref()),
    };
    Ok(playout_with(board, mode, &eval, rng, &mut Scratch::default())?.0)
}

/// Rollout from a freshly expanded node: the highest-prior edge first (ties
/// to the lowest index), then `mode` to the end. Returns the total score from
/// the node's state, including the terminal adjustment.
pub fn rollout<R: Rng + ?Sized>(node: &SearchNode, mode: RolloutMode, policy: &Policy, rng: &mut R) -> Result<Score> {
    let edges = node.edges();
    if edges.is_empty() {
        return Ok(0);
    }
    let first = highest_prior(edges.iter().map(|e| e.prior));
    let out = node.board().apply_action(node.actions()[first])?;
    Ok(out.reward() + playout(&out.next_board, mode, policy, rng)?)
}

pub(crate) fn highest_prior(priors: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, p) in priors.enumerate() {
        if p > best.1 {
            best = (i, p);
        }
    }
    best.0
}
