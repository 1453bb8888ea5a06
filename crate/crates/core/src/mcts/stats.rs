use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

/// Per-edge search statistics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EdgeStats {
    /// Visits, including in-flight ones.
    pub n: u32,
    /// In-flight selections (virtual-loss count).
    pub w: u32,
    pub q_total: f64,
    pub q_bar: f64,
    pub prior: f64,
}

impl EdgeStats {
    pub fn with_prior(prior: f64) -> EdgeStats {
        EdgeStats {
            prior,
            ..EdgeStats::default()
        }
    }

    /// Visits whose return has been backed up.
    pub fn completed(&self) -> u32 {
        self.n - self.w
    }
}

/// What the max-min scaling is taken over.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationMode {
    /// Extrema of the loss-corrected mean values of the node's edges.
    #[default]
    MeanValues,
    /// Extrema of the individual returns observed through the node
    /// (experimental).
    RewardExtrema,
}

/// Parameters of the selection rule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SelectParams {
    pub c_puct: f64,
    pub virtual_loss_weight: f64,
    pub normalization: NormalizationMode,
}

/// `w · W · |Q̄|`.
pub fn virtual_loss(e: &EdgeStats, weight: f64) -> f64 {
    if e.w == 0 {
        return 0.0;
    }
    weight * e.w as f64 * e.q_bar.abs()
}

/// `Q̄ − L`, the value that gets normalized.
pub fn effective_value(e: &EdgeStats, weight: f64) -> f64 {
    e.q_bar - virtual_loss(e, weight)
}

/// `c · P · √N(s) / (1 + N)`.
pub fn puct_bonus(e: &EdgeStats, parent_visits: u64, c_puct: f64) -> f64 {
    c_puct * e.prior * (parent_visits as f64).sqrt() / (1.0 + e.n as f64)
}

/// Maps `v` onto `[−1, 1]` using the extrema `lo..=hi`; 1 when the range is
/// empty.
pub fn normalize_value(v: f64, lo: f64, hi: f64) -> f64 {
    if !(hi > lo) {
        return 1.0;
    }
    (2.0 * (v - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0)
}

/// Node-local max-min scaling of `values` onto `[−1, 1]`.
pub fn normalize_values(values: &[f64]) -> Vec<f64> {
    let (lo, hi) = extrema(values.iter().copied());
    values.iter().map(|&v| normalize_value(v, lo, hi)).collect()
}

fn extrema(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Selection score of every edge: normalized loss-corrected value plus the
/// PUCT bonus. `reward_range` is only consulted in
/// [`NormalizationMode::RewardExtrema`].
pub fn puct_scores(
    edges: &[EdgeStats],
    parent_visits: u64,
    params: &SelectParams,
    reward_range: Option<(f64, f64)>,
) -> Vec<f64> {
    let w = params.virtual_loss_weight;
    let (lo, hi) = match params.normalization {
        NormalizationMode::MeanValues => extrema(edges.iter().map(|e| effective_value(e, w))),
        NormalizationMode::RewardExtrema => reward_range.unwrap_or((0.0, 0.0)),
    };
    edges
        .iter()
        .map(|e| normalize_value(effective_value(e, w), lo, hi) + puct_bonus(e, parent_visits, params.c_puct))
        .collect()
}

/// Index of the maximum, ties broken uniformly with `rng`. The generator is
/// only consulted when there is a tie.
pub fn argmax_random_tie<R: Rng + ?Sized>(scores: &[f64], rng: &mut R) -> Option<usize> {
    argmax_filtered(scores.iter().copied().map(Some), rng)
}

pub(crate) fn argmax_filtered<R: Rng + ?Sized>(
    scores: impl Iterator<Item = Option<f64>>,
    rng: &mut R,
) -> Option<usize> {
    let mut best = f64::NEG_INFINITY;
    let mut ties: Vec<usize> = Vec::new();
    for (i, s) in scores.enumerate() {
        let Some(s) = s else { continue };
        if s > best || ties.is_empty() {
            best = s;
            ties.clear();
            ties.push(i);
        } else if s == best {
            ties.push(i);
        }
    }
    match ties.len() {
        0 => None,
        1 => Some(ties[0]),
        n => Some(ties[rng.random_range(0..n)]),
    }
}

/// The edge PUCT selection picks, without touching any counters.
pub fn select_index<R: Rng + ?Sized>(
    edges: &[EdgeStats],
    parent_visits: u64,
    params: &SelectParams,
    reward_range: Option<(f64, f64)>,
    rng: &mut R,
) -> Option<usize> {
    argmax_random_tie(&puct_scores(edges, parent_visits, params, reward_range), rng)
}

/// `(1 − ε)·priors + ε·Dir(α)`. The noise is drawn as independent Gamma(α, 1)
/// samples normalized by their sum.
pub fn dirichlet_mix<R: Rng + ?Sized>(priors: &[f64], alpha: f64, epsilon: f64, rng: &mut R) -> Vec<f64> {
    if epsilon == 0.0 || priors.is_empty() {
        return priors.to_vec();
    }
    let noise = dirichlet(priors.len(), alpha, rng);
    priors
        .iter()
        .zip(&noise)
        .map(|(p, n)| (1.0 - epsilon) * p + epsilon * n)
        .collect()
}

/// One draw from a symmetric Dirichlet over `k` components.
pub fn dirichlet<R: Rng + ?Sized>(k: usize, alpha: f64, rng: &mut R) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("dirichlet alpha must be positive and finite");
    let mut draws: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
    let sum: f64 = draws.iter().sum();
    if sum > 0.0 && sum.is_finite() {
        draws.iter_mut().for_each(|d| *d /= sum);
    } else {
        // every draw underflowed; only possible for tiny alpha
        draws.iter_mut().for_each(|d| *d = 1.0 / k as f64);
    }
    draws
}
