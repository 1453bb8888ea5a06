use std::sync::OnceLock;

use parking_lot::{Condvar, Mutex, MutexGuard};
use rand::Rng;

use super::stats::{select_index, EdgeStats, SelectParams};
use crate::error::{Error, Result};
use crate::samegame::{Action, Board, Score};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    Fresh,
    /// A worker is evaluating the policy for this node; others wait.
    Expanding,
    Expanded,
}

struct NodeStats {
    phase: Phase,
    edges: Vec<EdgeStats>,
    /// `Σ_a N(s, a)`.
    visits: u64,
    /// The optimistic initialization has run.
    initialized: bool,
    /// Terminal nodes count as a leaf expansion on their first visit.
    visited: bool,
    /// Smallest and largest return backed up through this node's edges.
    reward_range: Option<(f64, f64)>,
}

struct Expansion {
    actions: Vec<Action>,
    children: Vec<OnceLock<Box<SearchNode>>>,
}

/// A node of the shared search tree.
///
/// Edge statistics live behind a per-node mutex. Child nodes are created on
/// first traversal and never move afterwards, so workers can hold plain
/// references to them while the tree grows.
pub struct SearchNode {
    board: Board,
    /// Score of the move into this node, plus the terminal adjustment when
    /// this node is terminal.
    reward: Score,
    terminal: bool,
    stats: Mutex<NodeStats>,
    ready: Condvar,
    expansion: OnceLock<Expansion>,
}

impl std::fmt::Debug for SearchNode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SearchNode")
            .field("board", &self.board)
            .field("reward", &self.reward)
            .field("terminal", &self.terminal)
            .field("edges", &self.edges())
            .finish()
    }
}

/// What a worker found on arriving at a node.
pub(crate) enum Arrival<'a> {
    Terminal {
        first_visit: bool,
    },
    /// The caller now owns the expansion and must call `install` or
    /// `abandon_expansion`.
    MustExpand,
    Selected(usize, &'a SearchNode),
}

impl SearchNode {
    /// A root node for `board`.
    pub fn new(board: Board) -> SearchNode {
        let terminal = board.is_terminal();
        SearchNode::with_reward(board, 0, terminal)
    }

    fn with_reward(board: Board, reward: Score, terminal: bool) -> SearchNode {
        SearchNode {
            board,
            reward,
            terminal,
            stats: Mutex::new(NodeStats {
                phase: Phase::Fresh,
                edges: Vec::new(),
                visits: 0,
                initialized: false,
                visited: false,
                reward_range: None,
            }),
            ready: Condvar::new(),
            expansion: OnceLock::new(),
        }
    }

    pub fn board(&self) -> &Board {
        &self.board
    }

    pub fn reward(&self) -> Score {
        self.reward
    }

    pub fn is_terminal(&self) -> bool {
        self.terminal
    }

    pub fn is_expanded(&self) -> bool {
        self.stats.lock().phase == Phase::Expanded
    }

    /// Canonical-order actions of an expanded node; empty otherwise.
    pub fn actions(&self) -> &[Action] {
        self.expansion.get().map_or(&[], |e| &e.actions)
    }

    /// Snapshot of the edge statistics.
    pub fn edges(&self) -> Vec<EdgeStats> {
        self.stats.lock().edges.clone()
    }

    pub fn visits(&self) -> u64 {
        self.stats.lock().visits
    }

    pub fn child(&self, edge: usize) -> Option<&SearchNode> {
        self.expansion.get()?.children.get(edge)?.get().map(|b| &**b)
    }

    /// The child behind `edge`, created on first use.
    pub fn child_or_create(&self, edge: usize) -> Result<&SearchNode> {
        let exp = self
            .expansion
            .get()
            .ok_or(Error::Contract("child of an unexpanded node"))?;
        let slot = exp
            .children
            .get(edge)
            .ok_or(Error::Contract("edge index out of range"))?;
        Ok(slot.get_or_init(|| {
            let out = self
                .board
                .apply_action(exp.actions[edge])
                .expect("expansion actions are legal");
            let reward = out.reward();
            Box::new(SearchNode::with_reward(out.next_board, reward, out.terminal))
        }))
    }

    /// Detaches the subtree behind `edge`.
    pub fn take_child(&mut self, edge: usize) -> Option<Box<SearchNode>> {
        self.expansion.get_mut()?.children.get_mut(edge)?.take()
    }

    /// Installs one edge per legal action with the given priors, which must be
    /// in canonical action order and sum to 1.
    pub fn expand(&self, priors: &[f64]) -> Result<()> {
        {
            let mut s = self.stats.lock();
            if s.phase != Phase::Fresh {
                return Err(Error::Contract("expand on an already expanded node"));
            }
            s.phase = Phase::Expanding;
        }
        self.install(priors)
    }

    /// Finishes an expansion claimed through `arrive`.
    pub(crate) fn install(&self, priors: &[f64]) -> Result<()> {
        if self.terminal {
            self.abandon_expansion();
            return Err(Error::Contract("expand on a terminal node"));
        }
        let actions = self.board.legal_actions();
        if priors.len() != actions.len() {
            self.abandon_expansion();
            return Err(Error::Contract("one prior per legal action required"));
        }
        let children = (0..actions.len()).map(|_| OnceLock::new()).collect();
        if self.expansion.set(Expansion { actions, children }).is_err() {
            return Err(Error::Contract("node expanded twice"));
        }
        let mut s = self.stats.lock();
        s.edges = priors.iter().map(|&p| EdgeStats::with_prior(p)).collect();
        s.phase = Phase::Expanded;
        drop(s);
        self.ready.notify_all();
        Ok(())
    }

    /// Returns a claimed node to the fresh state and wakes any waiters.
    pub(crate) fn abandon_expansion(&self) {
        let mut s = self.stats.lock();
        if s.phase == Phase::Expanding {
            s.phase = Phase::Fresh;
        }
        drop(s);
        self.ready.notify_all();
    }

    fn wait_expanded(&self) -> MutexGuard<'_, NodeStats> {
        let mut s = self.stats.lock();
        while s.phase == Phase::Expanding {
            self.ready.wait(&mut s);
        }
        s
    }

    /// One step of a descent: claims the expansion of a fresh node, scores a
    /// terminal one, or selects an edge (incrementing its `W` and `N`) and
    /// returns the child.
    pub(crate) fn arrive<R: Rng + ?Sized>(&self, params: &SelectParams, rng: &mut R) -> Result<Arrival<'_>> {
        if self.terminal {
            let mut s = self.stats.lock();
            let first_visit = !s.visited;
            s.visited = true;
            return Ok(Arrival::Terminal { first_visit });
        }
        let mut s = self.wait_expanded();
        if s.phase == Phase::Fresh {
            s.phase = Phase::Expanding;
            return Ok(Arrival::MustExpand);
        }
        let i = Self::select_locked(&mut s, params, rng)?;
        drop(s);
        Ok(Arrival::Selected(i, self.child_or_create(i)?))
    }

    fn select_locked<R: Rng + ?Sized>(s: &mut NodeStats, params: &SelectParams, rng: &mut R) -> Result<usize> {
        let i = select_index(&s.edges, s.visits, params, s.reward_range, rng)
            .ok_or(Error::Contract("selection at a node without edges"))?;
        Self::enter_edge(s, i);
        Ok(i)
    }

    fn enter_edge(s: &mut NodeStats, i: usize) {
        s.edges[i].n += 1;
        s.edges[i].w += 1;
        s.visits += 1;
    }

    /// PUCT selection with virtual loss. Increments `W` and `N` of the chosen
    /// edge.
    pub fn select_edge<R: Rng + ?Sized>(&self, params: &SelectParams, rng: &mut R) -> Result<usize> {
        if self.terminal {
            return Err(Error::Contract("select_edge on a terminal node"));
        }
        let mut s = self.wait_expanded();
        if s.phase != Phase::Expanded {
            return Err(Error::Contract("select_edge on an unexpanded node"));
        }
        Self::select_locked(&mut s, params, rng)
    }

    /// Highest-prior edge (lowest index among ties), entered as the first
    /// step of this node's rollout.
    pub fn enter_rollout_edge(&self) -> Result<usize> {
        let mut s = self.stats.lock();
        if s.phase != Phase::Expanded {
            return Err(Error::Contract("rollout from an unexpanded node"));
        }
        let mut best = 0;
        for (i, e) in s.edges.iter().enumerate() {
            if e.prior > s.edges[best].prior {
                best = i;
            }
        }
        Self::enter_edge(&mut s, best);
        Ok(best)
    }

    /// After the node's first rollout returns `r` (measured from this node's
    /// state), sets `Q̄ = r` on every edge with no completed visit.
    pub fn optimistic_init(&self, r: f64) -> Result<()> {
        let mut s = self.stats.lock();
        if s.phase != Phase::Expanded {
            return Err(Error::Contract("optimistic_init on an unexpanded node"));
        }
        if s.initialized {
            return Err(Error::Contract("optimistic_init called twice on a node"));
        }
        s.initialized = true;
        for e in s.edges.iter_mut().filter(|e| e.completed() == 0) {
            e.q_bar = r;
        }
        Ok(())
    }

    /// Backs up the return `r` through `edge`: `Q_total += r`,
    /// `Q̄ = Q_total / N`, `W −= 1`.
    pub fn record_return(&self, edge: usize, r: f64) -> Result<()> {
        let mut s = self.stats.lock();
        let e = s
            .edges
            .get_mut(edge)
            .ok_or(Error::Contract("edge index out of range"))?;
        if e.w == 0 {
            return Err(Error::Contract("virtual-loss counter underflow"));
        }
        e.w -= 1;
        e.q_total += r;
        e.q_bar = e.q_total / e.n as f64;
        s.reward_range = Some(match s.reward_range {
            None => (r, r),
            Some((lo, hi)) => (lo.min(r), hi.max(r)),
        });
        Ok(())
    }

    /// Sum of `W` over the subtree and a check that no node's children were
    /// visited more often than the node itself.
    pub(crate) fn audit(&self, incoming: Option<u64>, out: &mut TreeAudit) {
        out.nodes += 1;
        let s = self.stats.lock();
        out.in_flight += s.edges.iter().map(|e| e.w as u64).sum::<u64>();
        if s.phase == Phase::Expanded {
            out.expanded += 1;
            if let Some(n) = incoming {
                if s.visits > n {
                    out.conservation_violations += 1;
                }
            }
        }
        let counts: Vec<u64> = s.edges.iter().map(|e| e.n as u64).collect();
        drop(s);
        for (i, n) in counts.into_iter().enumerate() {
            if let Some(c) = self.child(i) {
                c.audit(Some(n), out);
            }
        }
    }
}

/// Structural summary of a search tree.
#[derive(Clone, Debug, Default, PartialEq, Eq, serde::Serialize)]
pub struct TreeAudit {
    pub nodes: u64,
    pub expanded: u64,
    /// Sum of all `W` counters.
    pub in_flight: u64,
    /// Nodes whose children's visits exceed the node's own.
    pub conservation_violations: u64,
}

/// Backs up a simulation. `path` lists `(node, edge)` pairs from the root
/// down; `leaf_return` is the return from the state below the last edge.
/// Each edge receives the return from its own parent state onward.
pub fn backpropagate(path: &[(&SearchNode, usize)], leaf_return: f64) -> Result<()> {
    let mut r = leaf_return;
    for &(node, edge) in path.iter().rev() {
        let child = node
            .child(edge)
            .ok_or(Error::Contract("backpropagation through a missing child"))?;
        r += child.reward as f64;
        node.record_return(edge, r)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mcts::NormalizationMode;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn board() -> Board {
        // three groups: 1s, 2s, 3s
        Board::from_rows(3, &[&[1, 1, 2], &[3, 3, 2]]).unwrap()
    }

    const PARAMS: SelectParams = SelectParams {
        c_puct: 1.0,
        virtual_loss_weight: 0.01,
        normalization: NormalizationMode::MeanValues,
    };

    #[test]
    fn expansion_installs_zeroed_edges() {
        let n = SearchNode::new(board());
        n.expand(&[0.25, 0.25, 0.5]).unwrap();
        assert!(n.is_expanded());
        assert_eq!(n.actions().len(), 3);
        let e = n.edges();
        assert!(e
            .iter()
            .all(|e| e.n == 0 && e.w == 0 && e.q_total == 0.0 && e.q_bar == 0.0));
        assert!(n.expand(&[1.0, 0.0, 0.0]).is_err());
        assert!(SearchNode::new(board()).expand(&[1.0]).is_err());
    }

    #[test]
    fn terminal_node_cannot_expand_or_select() {
        let t = SearchNode::new(Board::from_rows(2, &[&[1, 2]]).unwrap());
        assert!(t.is_terminal());
        assert!(t.expand(&[]).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(t.select_edge(&PARAMS, &mut rng).is_err());
    }

    #[test]
    fn optimistic_init_examples() {
        let n = SearchNode::new(board());
        n.expand(&[0.2, 0.3, 0.5]).unwrap();
        let first = n.enter_rollout_edge().unwrap();
        assert_eq!(first, 2);
        n.optimistic_init(150.0).unwrap();
        assert!(n.edges().iter().all(|e| e.q_bar == 150.0));
        assert!(n.optimistic_init(150.0).is_err());

        n.record_return(first, 150.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        // select edge 0 explicitly by giving it the only bonus that matters
        let e = n.select_edge(&PARAMS, &mut rng).unwrap();
        n.record_return(e, 200.0).unwrap();
        let edges = n.edges();
        assert_eq!(edges[e].q_bar, edges[e].q_total / edges[e].n as f64);
        for (i, x) in edges.iter().enumerate() {
            if i != e && i != first {
                assert_eq!(x.q_bar, 150.0);
            }
        }
    }

    #[test]
    fn single_edge_optimistic_init() {
        let n = SearchNode::new(Board::from_rows(2, &[&[1, 1, 2]]).unwrap());
        n.expand(&[1.0]).unwrap();
        n.optimistic_init(-7.0).unwrap();
        assert_eq!(n.edges()[0].q_bar, -7.0);
    }

    #[test]
    fn record_return_examples() {
        let n = SearchNode::new(board());
        n.expand(&[0.2, 0.3, 0.5]).unwrap();
        assert!(n.record_return(0, 1.0).is_err(), "underflow must be reported");
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let e = n.select_edge(&PARAMS, &mut rng).unwrap();
        assert_eq!(n.edges()[e].w, 1);
        n.record_return(e, 100.0).unwrap();
        let s = n.edges()[e];
        assert_eq!((s.n, s.w, s.q_total, s.q_bar), (1, 0, 100.0, 100.0));
        // force a second visit of the same edge
        {
            let mut st = n.stats.lock();
            SearchNode::enter_edge(&mut st, e);
        }
        n.record_return(e, 200.0).unwrap();
        assert_eq!(n.edges()[e].q_bar, 150.0);
        assert_eq!(n.edges()[e].w, 0);
    }

    #[test]
    fn backpropagation_uses_parent_frame_returns() {
        // [1 1 1 2 2]: clearing the 1s scores 1, then the 2s score 0 and
        // clear the board
        let root = SearchNode::new(Board::from_rows(2, &[&[1, 1, 1, 2, 2]]).unwrap());
        root.expand(&[0.5, 0.5]).unwrap();
        let e = root.enter_rollout_edge().unwrap();
        assert_eq!(root.actions()[e], Action::new(0, 0));
        let child = root.child_or_create(e).unwrap();
        assert_eq!(child.reward(), 1);
        child.expand(&[1.0]).unwrap();
        let f = child.enter_rollout_edge().unwrap();
        let leaf = child.child_or_create(f).unwrap();
        assert!(leaf.is_terminal());
        assert_eq!(leaf.reward(), 1000);
        backpropagate(&[(&root, e), (child, f)], 0.0).unwrap();
        assert_eq!(child.edges()[f].q_total, 1000.0);
        assert_eq!(root.edges()[e].q_total, 1001.0);
    }

    #[test]
    fn concurrent_arrivals_wait_for_priors() {
        let node = SearchNode::new(board());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(node.arrive(&PARAMS, &mut rng).unwrap(), Arrival::MustExpand));
        std::thread::scope(|s| {
            let waiter = s.spawn(|| {
                let mut rng = ChaCha8Rng::seed_from_u64(2);
                match node.arrive(&PARAMS, &mut rng).unwrap() {
                    Arrival::Selected(i, _) => i,
                    _ => panic!("expected a selection"),
                }
            });
            std::thread::sleep(std::time::Duration::from_millis(20));
            node.install(&[0.0, 1.0, 0.0]).unwrap();
            let picked = waiter.join().unwrap();
            assert!(picked < 3);
        });
        assert_eq!(node.visits(), 1);
    }
}
