use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::time::{Duration, Instant};

use parking_lot::Mutex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::SearchConfig;
use super::eval::{eval_queue, Evaluator, QueueStats};
use super::node::{backpropagate, Arrival, SearchNode, TreeAudit};
use super::rollout::{playout_with, Scratch};
use super::stats::{argmax_filtered, dirichlet_mix, EdgeStats, SelectParams};
use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::samegame::{Action, Board};

const NOISE_STREAM: u64 = 0;
const BEST_ACTION_STREAM: u64 = 1;
const FIRST_WORKER_STREAM: u64 = 2;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RootEdge {
    pub action: Action,
    pub stats: EdgeStats,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SearchResult {
    /// Highest mean value among root edges visited at least once.
    pub best_action: Action,
    pub root_edges: Vec<RootEdge>,
    /// Completed simulations.
    pub simulations: u64,
    /// Node expansions, terminal leaves included.
    pub expansions: u64,
    /// First visits of terminal nodes.
    pub leaf_expansions: u64,
    /// Policy outputs with no usable mass on legal actions, replaced by
    /// uniform priors.
    pub policy_fallbacks: u64,
    pub wall_time_ms: f64,
    pub audit: TreeAudit,
    pub queue: Option<QueueStats>,
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

struct Shared<'a> {
    cfg: &'a SearchConfig,
    params: SelectParams,
    root: &'a SearchNode,
    started: AtomicU64,
    completed: AtomicU64,
    expansions: AtomicU64,
    leaf_expansions: AtomicU64,
    fallbacks: AtomicU64,
    stop: AtomicBool,
    deadline: Option<Instant>,
    noise_rng: Mutex<ChaCha8Rng>,
    error: Mutex<Option<Error>>,
}

impl<'a> Shared<'a> {
    fn claim(&self) -> bool {
        if self.stop.load(Ordering::Relaxed) {
            return false;
        }
        let index = self.started.fetch_add(1, Ordering::Relaxed);
        match self.deadline {
            // the first simulation always runs so there is a best action
            Some(d) => index == 0 || Instant::now() < d,
            None => index < self.cfg.simulations,
        }
    }

    fn worker(&self, eval: &Evaluator<'_>, rng: &mut ChaCha8Rng) {
        let mut path = Vec::new();
        let mut scratch = Scratch::default();
        while self.claim() {
            match self.simulate(eval, rng, &mut path, &mut scratch) {
                Ok(()) => {
                    self.completed.fetch_add(1, Ordering::Relaxed);
                }
                Err(e) => {
                    self.error.lock().get_or_insert(e);
                    self.stop.store(true, Ordering::Relaxed);
                    break;
                }
            }
        }
    }

    fn priors(&self, node: &SearchNode, eval: &Evaluator<'_>) -> Result<Vec<f64>> {
        let board = node.board();
        let legal: Vec<usize> = board
            .legal_actions()
            .into_iter()
            .map(|a| board.action_index(a))
            .collect();
        let ren = eval.priors(board, &legal)?;
        if ren.fell_back {
            self.fallbacks.fetch_add(1, Ordering::Relaxed);
        }
        let priors = ren.legal_priors(&legal);
        match self.cfg.dirichlet_alpha {
            Some(alpha) if std::ptr::eq(node, self.root) => Ok(dirichlet_mix(
                &priors,
                alpha,
                self.cfg.dirichlet_epsilon,
                &mut *self.noise_rng.lock(),
            )),
            _ => Ok(priors),
        }
    }

    /// Selection, expansion, rollout and backpropagation.
    fn simulate(
        &self,
        eval: &Evaluator<'_>,
        rng: &mut ChaCha8Rng,
        path: &mut Vec<(&'a SearchNode, usize)>,
        scratch: &mut Scratch,
    ) -> Result<()> {
        path.clear();
        let mut node = self.root;
        let leaf_return = loop {
            match node.arrive(&self.params, rng)? {
                Arrival::Terminal { first_visit } => {
                    if first_visit {
                        self.expansions.fetch_add(1, Ordering::Relaxed);
                        self.leaf_expansions.fetch_add(1, Ordering::Relaxed);
                    }
                    break 0;
                }
                Arrival::MustExpand => {
                    let priors = match self.priors(node, eval) {
                        Ok(p) => p,
                        Err(e) => {
                            node.abandon_expansion();
                            return Err(e);
                        }
                    };
                    node.install(&priors)?;
                    self.expansions.fetch_add(1, Ordering::Relaxed);
                    let first = node.enter_rollout_edge()?;
                    path.push((node, first));
                    let child = node.child_or_create(first)?;
                    let (r, fallbacks) = playout_with(child.board(), self.cfg.rollout_mode, eval, rng, scratch)?;
                    if fallbacks > 0 {
                        self.fallbacks.fetch_add(fallbacks, Ordering::Relaxed);
                    }
                    node.optimistic_init((child.reward() + r) as f64)?;
                    break r;
                }
                Arrival::Selected(edge, child) => {
                    path.push((node, edge));
                    node = child;
                }
            }
        };
        backpropagate(path, leaf_return as f64)
    }
}

/// Searches from `board` with a fresh tree.
pub fn search(board: &Board, cfg: &SearchConfig, policy: &Policy) -> Result<SearchResult> {
    search_tree(&SearchNode::new(board.clone()), cfg, policy)
}

/// Runs `cfg.simulations` simulations (or until the time budget runs out)
/// on an existing tree with `cfg.threads` workers. One worker runs inline and
/// is bit-reproducible for a fixed seed.
pub fn search_tree(root: &SearchNode, cfg: &SearchConfig, policy: &Policy) -> Result<SearchResult> {
    cfg.validate()?;
    if root.is_terminal() {
        return Err(Error::Contract("search from a terminal board"));
    }
    let start = Instant::now();
    let shared = Shared {
        cfg,
        params: cfg.select_params(),
        root,
        started: AtomicU64::new(0),
        completed: AtomicU64::new(0),
        expansions: AtomicU64::new(0),
        leaf_expansions: AtomicU64::new(0),
        fallbacks: AtomicU64::new(0),
        stop: AtomicBool::new(false),
        deadline: cfg.time_budget_ms.map(|ms| start + Duration::from_millis(ms)),
        noise_rng: Mutex::new(rng_for(cfg.seed, NOISE_STREAM)),
        error: Mutex::new(None),
    };
    let worker_rng = |i: usize| rng_for(cfg.seed, FIRST_WORKER_STREAM + i as u64);

    let mut queue = None;
    if cfg.threads == 1 {
        let eval = match policy {
            Policy::Uniform => Evaluator::Uniform,
            Policy::Model(m) => Evaluator::Direct(m.as_ref()),
        };
        shared.worker(&eval, &mut worker_rng(0));
    } else {
        std::thread::scope(|scope| match policy {
            Policy::Uniform => {
                for i in 0..cfg.threads {
                    let shared = &shared;
                    scope.spawn(move || shared.worker(&Evaluator::Uniform, &mut worker_rng(i)));
                }
            }
            Policy::Model(m) => {
                let (server, clients) = eval_queue(
                    m.as_ref(),
                    cfg.threads,
                    cfg.eval_batch_limit,
                    Duration::from_micros(cfg.eval_timeout_us),
                );
                let server = scope.spawn(move || server.run());
                for (i, client) in clients.into_iter().enumerate() {
                    let shared = &shared;
                    scope.spawn(move || shared.worker(&Evaluator::Queued(client), &mut worker_rng(i)));
                }
                queue = Some(server.join().expect("evaluation queue panicked"));
            }
        });
    }
    if let Some(e) = shared.error.lock().take() {
        return Err(e);
    }

    let edges = root.edges();
    let mut best_rng = rng_for(cfg.seed, BEST_ACTION_STREAM);
    let best = argmax_filtered(edges.iter().map(|e| (e.n >= 1).then_some(e.q_bar)), &mut best_rng)
        .ok_or(Error::Contract("search finished without visiting the root"))?;
    let mut audit = TreeAudit::default();
    root.audit(None, &mut audit);
    Ok(SearchResult {
        best_action: root.actions()[best],
        root_edges: root
            .actions()
            .iter()
            .zip(edges)
            .map(|(&action, stats)| RootEdge { action, stats })
            .collect(),
        simulations: shared.completed.load(Ordering::Relaxed),
        expansions: shared.expansions.load(Ordering::Relaxed),
        leaf_expansions: shared.leaf_expansions.load(Ordering::Relaxed),
        policy_fallbacks: shared.fallbacks.load(Ordering::Relaxed),
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
        audit,
        queue,
    })
}
