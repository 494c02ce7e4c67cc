//! Per-node adaptation: importance-sampling weights over neighbors, draws
//! from them, the progress measure used to score a trial update, the
//! cost-per-progress evaluation, and the descending search over the number
//! of neighbors to contact.

use ndarray::{Array1, ArrayView1};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::CacheEntry;
use crate::error::{Error, Result};
use crate::problem::{Problem, RegularizerKind};

/// Tolerance on `sum(weights) == 1`.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Sampling distribution of one node over its neighbors.
///
/// `neighbors`, `weights` and `source_tags` are parallel and follow the
/// node's sorted neighbor order.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingWeights {
    pub owner: usize,
    pub neighbors: Vec<usize>,
    pub weights: Vec<f64>,
    /// Round tag of the cached value each weight was computed from.
    pub source_tags: Vec<usize>,
    /// All distances were zero and the uniform distribution was used.
    pub uniform_fallback: bool,
}

impl SamplingWeights {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Position of `node` in the neighbor list.
    pub fn slot_of(&self, node: usize) -> Option<usize> {
        self.neighbors.binary_search(&node).ok()
    }

    pub fn weight_of(&self, node: usize) -> Option<f64> {
        self.slot_of(node).map(|s| self.weights[s])
    }
}

fn distance(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// `w_j ∝ ||x_i - x_j^(l_j)||` over the cached neighbor values, falling back
/// to uniform when every distance is zero.
pub fn sampling_weights(owner: usize, x: ArrayView1<f64>, cache: &[CacheEntry]) -> Result<SamplingWeights> {
    if cache.is_empty() {
        return Err(Error::NoNeighbors(owner));
    }
    let distances: Vec<f64> = cache.iter().map(|e| distance(x, e.x.view())).collect();
    if distances.iter().any(|d| !d.is_finite()) {
        return Err(Error::NonFinite("cached neighbor value"));
    }
    let total: f64 = distances.iter().sum();
    let uniform_fallback = total == 0.0;
    let weights = if uniform_fallback {
        vec![1.0 / cache.len() as f64; cache.len()]
    } else {
        distances.iter().map(|d| d / total).collect()
    };
    Ok(SamplingWeights {
        owner,
        neighbors: cache.iter().map(|e| e.neighbor).collect(),
        weights,
        source_tags: cache.iter().map(|e| e.tag).collect(),
        uniform_fallback,
    })
}

/// Draws one slot index from the categorical distribution `weights`.
pub fn draw_slot<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    assert!(total > 0.0, "degenerate sampling weights");
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (slot, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = slot;
            if target < acc {
                return slot;
            }
        }
    }
    last_positive
}

/// `num` i.i.d. draws (with replacement) of neighbor ids.
pub fn select_nodes<R: Rng + ?Sized>(weights: &SamplingWeights, num: usize, rng: &mut R) -> Vec<usize> {
    (0..num)
        .map(|_| weights.neighbors[draw_slot(&weights.weights, rng)])
        .collect()
}

/// Mean of all cached neighbor values.
pub fn cache_mean(cache: &[CacheEntry]) -> Array1<f64> {
    let mut mean = Array1::zeros(cache.first().map_or(0, |e| e.x.len()));
    for e in cache {
        mean += &e.x;
    }
    if !cache.is_empty() {
        mean /= cache.len() as f64;
    }
    mean
}

/// Predicted one-round progress of a trial update at node `node`.
///
/// l2: `|phi_i(x_prev) - phi_i(x_hat)|`. l1: the change in distance to the
/// neighbor mean, `| ||xbar - x_prev|| - ||xbar - x_hat|| |`, where `xbar`
/// is the mean of the cached neighbor values.
pub fn gamma(
    problem: &Problem,
    node: usize,
    x_prev: ArrayView1<f64>,
    x_hat: ArrayView1<f64>,
    cache: &[CacheEntry],
) -> f64 {
    match problem.regularizer.kind {
        RegularizerKind::L2 => gamma_objective(problem.local_phi(node, x_prev), problem.local_phi(node, x_hat)),
        RegularizerKind::L1 => gamma_consensus(cache_mean(cache).view(), x_prev, x_hat),
    }
}

pub fn gamma_objective(phi_prev: f64, phi_hat: f64) -> f64 {
    (phi_prev - phi_hat).abs()
}

pub fn gamma_consensus(mean: ArrayView1<f64>, x_prev: ArrayView1<f64>, x_hat: ArrayView1<f64>) -> f64 {
    (distance(mean, x_prev) - distance(mean, x_hat)).abs()
}

/// Cost per unit of predicted progress, `((s+1) C_cmp + num C_cmm) / gamma`.
/// Zero progress maps to `f64::MAX`.
pub fn evaluation(s: usize, num: usize, gamma: f64, c_cmp: f64, c_cmm: f64) -> f64 {
    if gamma <= 0.0 {
        return f64::MAX;
    }
    ((s + 1) as f64 * c_cmp + num as f64 * c_cmm) / gamma
}

/// Which attempted count the search commits to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchReturn {
    /// The last attempted count (the one whose evaluation went up).
    Literal,
    /// The attempted count with the smallest evaluation.
    #[default]
    Best,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchAttempt {
    pub s: usize,
    pub num: usize,
    pub gamma: f64,
    pub eval: f64,
    pub x_hat: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub num: usize,
    /// Index of the final attempt; the node spent `s + 1` computation units.
    pub s: usize,
    pub attempts: Vec<SearchAttempt>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchParams {
    pub stepsize: usize,
    pub c_cmp: f64,
    pub c_cmm: f64,
    pub mode: SearchReturn,
}

/// Initial count: `ceil(degree / 2)` in the first round, else the count
/// kept from the previous round.
pub fn initial_num(round: usize, degree: usize, previous: usize) -> usize {
    let start = if round <= 1 { degree.div_ceil(2) } else { previous };
    start.clamp(1, degree.max(1))
}

/// Descending search over the number of neighbors to contact.
///
/// Attempt `s` evaluates `trial(num_s)` (which returns the progress measure
/// and the trial update) and scores it with [`evaluation`]. Counts decrease
/// by `stepsize`, floored at 1. The search stops at the first attempt whose
/// evaluation exceeds the previous one, or once two consecutive attempts
/// have both used a single neighbor.
pub fn search_num<F>(start: usize, params: &SearchParams, mut trial: F) -> Result<SearchOutcome>
where
    F: FnMut(usize) -> Result<(f64, Array1<f64>)>,
{
    if params.stepsize == 0 {
        return Err(Error::InvalidArgument("search stepsize must be >= 1".into()));
    }
    let mut attempts: Vec<SearchAttempt> = Vec::new();
    let mut num = start.max(1);
    loop {
        let s = attempts.len();
        let (gamma, x_hat) = trial(num)?;
        let eval = evaluation(s, num, gamma, params.c_cmp, params.c_cmm);
        attempts.push(SearchAttempt {
            s,
            num,
            gamma,
            eval,
            x_hat,
        });
        if let Some(prev) = s.checked_sub(1).map(|p| &attempts[p]) {
            if eval > prev.eval || (num == 1 && prev.num == 1) {
                break;
            }
        }
        num = num.saturating_sub(params.stepsize).max(1);
    }
    let chosen = match params.mode {
        SearchReturn::Literal => attempts.len() - 1,
        // ties go to the later attempt, i.e. the smaller count
        SearchReturn::Best => attempts
            .iter()
            .enumerate()
            .fold(0, |best, (idx, a)| if a.eval <= attempts[best].eval { idx } else { best }),
    };
    Ok(SearchOutcome {
        num: attempts[chosen].num,
        s: attempts.len() - 1,
        attempts,
    })
}

/// Closed-form bound on `E||x_hat - x||^2` under distance-proportional
/// weights: `(c^2 eta^2 / 2) [ (sum_j ||d_j||)^2 - ||sum_j d_j||^2 ]`
/// with `d_j = x_i - x_j`.
pub fn variance_bound(x: ArrayView1<f64>, neighbor_values: &[ArrayView1<f64>], c: f64, eta: f64) -> f64 {
    let mut sum_norms = 0.0;
    let mut sum_vec = Array1::<f64>::zeros(x.len());
    for xj in neighbor_values {
        let d = &x - xj;
        sum_norms += d.dot(&d).sqrt();
        sum_vec += &d;
    }
    let gap = (sum_norms * sum_norms - sum_vec.dot(&sum_vec)).max(0.0);
    0.5 * c * c * eta * eta * gap
}
