//! Node state and synchronous round updates for D-ADMM, SCCD-ADMM and the
//! deterministic DSCCD-ADMM reference.
//!
//! Every node holds a primal `x`, an aggregate dual `p` (the sum of its
//! edge multipliers) and a cache of the latest neighbor values it has
//! received. A round reads only the previous round's states, so nodes are
//! updated in parallel; each node draws from its own stream keyed by
//! `(master_seed, node, round)`.

use std::sync::Arc;
use std::time::Instant;

use ndarray::{Array1, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapt::{self, SamplingWeights, SearchParams, SearchReturn};
use crate::error::{Error, Result};
use crate::problem::{LocalObjective, Problem, Regularizer, RegularizerKind};
use crate::seed;
use crate::solver::{self, FistaSettings, GradientSettings, SmoothFn, ThresholdRule};
use crate::topology::{self, Graph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    #[serde(rename = "dadmm")]
    DAdmm,
    Sccd,
    Dsccd,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::DAdmm => "dadmm",
            Variant::Sccd => "sccd",
            Variant::Dsccd => "dsccd",
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "dadmm" => Ok(Variant::DAdmm),
            "sccd" | "sccdadmm" => Ok(Variant::Sccd),
            "dsccd" | "dsccdadmm" => Ok(Variant::Dsccd),
            _ => Err(Error::InvalidArgument(format!("unknown variant '{s}'"))),
        }
    }
}

/// Tolerances and budgets of the per-node x-update solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InnerSettings {
    /// Gradient-mapping tolerance of the l2 x-update.
    pub l2_tolerance: f64,
    /// Same, for trial updates inside the search.
    pub trial_tolerance: f64,
    pub l2_max_iters: usize,
    /// Fixed FISTA step `rho` for the l1 x-update.
    pub fista_step: f64,
    pub fista_prg: f64,
    pub fista_max_iters: usize,
    pub threshold: ThresholdRule,
}

impl Default for InnerSettings {
    fn default() -> Self {
        InnerSettings {
            l2_tolerance: 1e-7,
            trial_tolerance: 1e-4,
            l2_max_iters: 50_000,
            fista_step: 0.01,
            fista_prg: 1e-2,
            fista_max_iters: 100_000,
            threshold: ThresholdRule::Lambda,
        }
    }
}

impl InnerSettings {
    fn gradient(&self, trial: bool) -> GradientSettings {
        GradientSettings {
            tolerance: if trial { self.trial_tolerance } else { self.l2_tolerance },
            max_iters: self.l2_max_iters,
            accelerate: false,
        }
    }

    fn fista(&self) -> FistaSettings {
        FistaSettings {
            step: self.fista_step,
            prg_tolerance: self.fista_prg,
            max_iters: self.fista_max_iters,
            threshold: self.threshold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub variant: Variant,
    /// Penalty `c`.
    pub c: f64,
    /// `D` in `eta_k = D / sqrt(2k)`.
    pub d_prox: f64,
    pub c_cmp: f64,
    /// `C_cmm / C_cmp`.
    pub co_rat: f64,
    pub stepsize: usize,
    pub acc_threshold: f64,
    pub cserr_threshold: f64,
    pub max_iters: usize,
    pub master_seed: u64,
    /// Charge one transfer per distinct selected neighbor instead of per draw.
    pub count_distinct: bool,
    pub search_return: SearchReturn,
    pub inner: InnerSettings,
    /// Record wall-clock seconds spent in each node update.
    pub measure_wallclock: bool,
}

impl RunConfig {
    pub fn new(variant: Variant, c: f64) -> Self {
        RunConfig {
            variant,
            c,
            d_prox: 0.3,
            c_cmp: 1.0,
            co_rat: 0.6,
            stepsize: 2,
            acc_threshold: 0.1,
            cserr_threshold: 0.1,
            max_iters: 5000,
            master_seed: 0,
            count_distinct: false,
            search_return: SearchReturn::Best,
            inner: InnerSettings::default(),
            measure_wallclock: false,
        }
    }

    pub fn c_cmm(&self) -> f64 {
        self.co_rat * self.c_cmp
    }

    /// `D / sqrt(2k)` for round `k >= 1`.
    pub fn eta(&self, round: usize) -> f64 {
        self.d_prox / (2.0 * round as f64).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        let checks = [
            (positive(self.c), "c must be > 0"),
            (positive(self.d_prox), "D must be > 0"),
            (self.c_cmp >= 0.0 && self.c_cmp.is_finite(), "C_cmp must be >= 0"),
            (self.co_rat >= 0.0 && self.co_rat.is_finite(), "co_rat must be >= 0"),
            (self.stepsize >= 1, "stepsize must be >= 1"),
            (positive(self.acc_threshold), "acc threshold must be > 0"),
            (positive(self.cserr_threshold), "cserr threshold must be > 0"),
            (self.max_iters >= 1, "max_iters must be >= 1"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(Error::Config((*msg).into())),
            None => Ok(()),
        }
    }
}

/// Latest value of one neighbor as stored by the owning node.
#[derive(Debug, Clone, PartialEq)]
pub struct CacheEntry {
    pub neighbor: usize,
    pub x: Array1<f64>,
    /// Round whose value this is. Never decreases.
    pub tag: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub id: usize,
    pub x: Array1<f64>,
    pub p: Array1<f64>,
    /// One entry per neighbor, in ascending neighbor order.
    pub cache: Vec<CacheEntry>,
    pub num_comm: usize,
}

impl NodeState {
    /// Zero primal and dual; every neighbor cached at its known zero start.
    pub fn initial(id: usize, dim: usize, neighbors: &[usize]) -> Self {
        NodeState {
            id,
            x: Array1::zeros(dim),
            p: Array1::zeros(dim),
            cache: neighbors
                .iter()
                .map(|&j| CacheEntry {
                    neighbor: j,
                    x: Array1::zeros(dim),
                    tag: 0,
                })
                .collect(),
            num_comm: neighbors.len().div_ceil(2).max(1),
        }
    }
}

/// A selected neighbor with the value it sent and its sampling weight.
#[derive(Debug, Clone, Copy)]
pub struct Selected<'a> {
    pub node: usize,
    pub x: ArrayView1<'a, f64>,
    pub weight: f64,
}

/// `p + c sum_j (x_i - x_j)`
pub fn p_update_full(p: ArrayView1<f64>, x: ArrayView1<f64>, neighbor_values: &[ArrayView1<f64>], c: f64) -> Array1<f64> {
    let mut out = p.to_owned();
    for xj in neighbor_values {
        out.scaled_add(c, &(&x - xj));
    }
    out
}

/// `(c / Num) sum_sel (x_i - x_j) / w_ij`, the gradient of the sampled
/// linearization term at the previous iterate.
pub fn grad_h(owner: usize, x: ArrayView1<f64>, selected: &[Selected], c: f64) -> Result<Array1<f64>> {
    if selected.is_empty() {
        return Err(Error::NoNeighbors(owner));
    }
    let scale = c / selected.len() as f64;
    let mut g = Array1::zeros(x.len());
    for s in selected {
        if !(s.weight > 0.0) {
            return Err(Error::ZeroWeight {
                node: owner,
                neighbor: s.node,
            });
        }
        g.scaled_add(scale / s.weight, &(&x - &s.x));
    }
    Ok(g)
}

/// `p + (c / Num) sum_sel (x_i - x_j) / w_ij`
pub fn p_update_sampled(owner: usize, p: ArrayView1<f64>, x: ArrayView1<f64>, selected: &[Selected], c: f64) -> Result<Array1<f64>> {
    Ok(&p + &grad_h(owner, x, selected, c)?)
}

/// `(c / Num) sum_sel ||x - (x_prev + x_j)/2||^2 / w_ij`
pub fn h_value(x: ArrayView1<f64>, x_prev: ArrayView1<f64>, selected: &[Selected], c: f64) -> f64 {
    let scale = c / selected.len() as f64;
    selected
        .iter()
        .map(|s| {
            let d = Array1::from_iter(x.iter().zip(x_prev.iter().zip(s.x.iter())).map(|(a, (b, cj))| a - 0.5 * (b + cj)));
            scale * d.dot(&d) / s.weight
        })
        .sum()
}

/// `f(x) + q^T x + alpha ||x - anchor||^2`
pub struct ProxSubproblem<'a> {
    pub local: &'a LocalObjective,
    pub linear: Array1<f64>,
    pub alpha: f64,
    pub anchor: Array1<f64>,
}

impl SmoothFn for ProxSubproblem<'_> {
    fn dim(&self) -> usize {
        self.anchor.len()
    }

    fn value(&self, x: ArrayView1<f64>) -> f64 {
        let d = &x - &self.anchor;
        self.local.value(x) + self.linear.dot(&x) + self.alpha * d.dot(&d)
    }

    fn gradient(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let mut g = self.local.gradient(x);
        g += &self.linear;
        g.scaled_add(2.0 * self.alpha, &(&x - &self.anchor));
        g
    }

    fn lipschitz(&self) -> f64 {
        self.local.lipschitz() + 2.0 * self.alpha
    }
}

fn solve(sub: &ProxSubproblem, reg: &Regularizer, x0: ArrayView1<f64>, inner: &InnerSettings, trial: bool) -> Result<Array1<f64>> {
    let sol = match reg.kind {
        RegularizerKind::L2 => solver::prox_gradient(sub, reg, x0, &inner.gradient(trial))?,
        RegularizerKind::L1 => solver::fista_fixed(sub, reg, x0, &inner.fista())?,
    };
    Ok(sol.x)
}

/// Minimizes `f + lambda r + x^T (p_new + grad_h) + ||x - x_prev||^2 / eta`
/// by proximal gradient with backtracking (block shrinkage for the l2 norm).
#[allow(clippy::too_many_arguments)]
pub fn x_update_sccd_l2(
    local: &LocalObjective,
    reg: &Regularizer,
    x_prev: ArrayView1<f64>,
    p_new: ArrayView1<f64>,
    grad_h: ArrayView1<f64>,
    eta: f64,
    inner: &InnerSettings,
    trial: bool,
) -> Result<Array1<f64>> {
    if !(eta > 0.0) {
        return Err(Error::InvalidArgument(format!("eta must be > 0, got {eta}")));
    }
    let sub = ProxSubproblem {
        local,
        linear: &p_new + &grad_h,
        alpha: 1.0 / eta,
        anchor: x_prev.to_owned(),
    };
    let settings = inner.gradient(trial);
    Ok(solver::prox_gradient(&sub, reg, x_prev, &settings)?.x)
}

/// Same objective as [`x_update_sccd_l2`], solved by fixed-step FISTA with
/// shrinkage and clamping to the box.
pub fn x_update_sccd_l1(
    local: &LocalObjective,
    reg: &Regularizer,
    x_prev: ArrayView1<f64>,
    p_new: ArrayView1<f64>,
    grad_h: ArrayView1<f64>,
    eta: f64,
    inner: &InnerSettings,
) -> Result<Array1<f64>> {
    if !(eta > 0.0) {
        return Err(Error::InvalidArgument(format!("eta must be > 0, got {eta}")));
    }
    if reg.kind != RegularizerKind::L1 || reg.box_bound.is_none() {
        return Err(Error::InvalidArgument("l1 update needs an l1 regularizer with a box".into()));
    }
    let sub = ProxSubproblem {
        local,
        linear: &p_new + &grad_h,
        alpha: 1.0 / eta,
        anchor: x_prev.to_owned(),
    };
    Ok(solver::fista_fixed(&sub, reg, x_prev, &inner.fista())?.x)
}

/// Dispatches on the regularizer kind.
#[allow(clippy::too_many_arguments)]
pub fn x_update_sccd(
    local: &LocalObjective,
    reg: &Regularizer,
    x_prev: ArrayView1<f64>,
    p_new: ArrayView1<f64>,
    grad_h: ArrayView1<f64>,
    eta: f64,
    inner: &InnerSettings,
    trial: bool,
) -> Result<Array1<f64>> {
    match reg.kind {
        RegularizerKind::L2 => x_update_sccd_l2(local, reg, x_prev, p_new, grad_h, eta, inner, trial),
        RegularizerKind::L1 => x_update_sccd_l1(local, reg, x_prev, p_new, grad_h, eta, inner),
    }
}

/// Minimizes `f + lambda r + x^T p_new + c sum_j ||x - (x_prev + x_j)/2||^2`.
///
/// The penalty equals `c d ||x - mean_j (x_prev + x_j)/2||^2` up to a
/// constant, which is what is handed to the solver.
pub fn x_update_dadmm(
    local: &LocalObjective,
    reg: &Regularizer,
    x_prev: ArrayView1<f64>,
    neighbor_values: &[ArrayView1<f64>],
    p_new: ArrayView1<f64>,
    c: f64,
    inner: &InnerSettings,
) -> Result<Array1<f64>> {
    let degree = neighbor_values.len();
    let mut anchor = x_prev.to_owned();
    if degree > 0 {
        let mut mean = Array1::<f64>::zeros(x_prev.len());
        for xj in neighbor_values {
            mean += xj;
        }
        mean /= degree as f64;
        anchor = (&anchor + &mean) * 0.5;
    }
    let sub = ProxSubproblem {
        local,
        linear: p_new.to_owned(),
        alpha: c * degree as f64,
        anchor,
    };
    solve(&sub, reg, x_prev, inner, false)
}

/// One search attempt as it appears in the trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttemptLog {
    pub node: usize,
    pub s: usize,
    pub num: usize,
    pub gamma: f64,
    pub eval: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    /// `eta_k`; absent for D-ADMM.
    pub eta: Option<f64>,
    /// `2 / eta_k <= c lambda_max` held this round.
    pub eta_warning: bool,
    pub nums: Vec<usize>,
    /// Index of the last search attempt per node (0 without a search).
    pub searches: Vec<usize>,
    /// Transmissions charged per node.
    pub transfers: Vec<usize>,
    pub attempts: Vec<AttemptLog>,
    /// Wall-clock seconds per node update, when measured.
    pub compute_seconds: Option<Vec<f64>>,
}

struct NodeOutcome {
    state: NodeState,
    num: usize,
    s: usize,
    transfers: usize,
    attempts: Vec<AttemptLog>,
    seconds: f64,
}

/// A running instance of one variant on one problem.
#[derive(Debug, Clone)]
pub struct Simulation {
    graph: Arc<Graph>,
    problem: Arc<Problem>,
    config: RunConfig,
    lambda_max: f64,
    states: Vec<NodeState>,
    round: usize,
}

impl Simulation {
    pub fn new(graph: Arc<Graph>, problem: Arc<Problem>, config: RunConfig) -> Result<Self> {
        config.validate()?;
        if graph.node_count() != problem.node_count() {
            return Err(Error::DimensionMismatch {
                expected: graph.node_count(),
                actual: problem.node_count(),
            });
        }
        if config.variant != Variant::DAdmm {
            if let Some(i) = (0..graph.node_count()).find(|&i| graph.degree(i) == 0) {
                return Err(Error::NoNeighbors(i));
            }
        }
        let dim = problem.dim();
        let states = (0..graph.node_count())
            .map(|i| Ok(NodeState::initial(i, dim, graph.neighbors(i)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Simulation {
            lambda_max: topology::laplacian_lambda_max(&graph),
            graph,
            problem,
            config,
            states,
            round: 0,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn states(&self) -> &[NodeState] {
        &self.states
    }

    /// Number of completed rounds.
    pub fn round(&self) -> usize {
        self.round
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    /// Replaces all node states, e.g. to start from a synchronized point.
    pub fn set_states(&mut self, states: Vec<NodeState>) -> Result<()> {
        if states.len() != self.states.len() {
            return Err(Error::DimensionMismatch {
                expected: self.states.len(),
                actual: states.len(),
            });
        }
        self.states = states;
        Ok(())
    }

    /// Runs round `k = round() + 1` for every node and commits the result.
    pub fn step(&mut self) -> Result<RoundRecord> {
        let k = self.round + 1;
        let outcomes = (0..self.states.len())
            .into_par_iter()
            .map(|i| self.node_update(i, k))
            .collect::<Result<Vec<_>>>()?;
        let eta = (self.config.variant != Variant::DAdmm).then(|| self.config.eta(k));
        let eta_warning = eta.is_some_and(|e| 2.0 / e <= self.config.c * self.lambda_max);
        let mut record = RoundRecord {
            round: k,
            eta,
            eta_warning,
            nums: Vec::with_capacity(outcomes.len()),
            searches: Vec::with_capacity(outcomes.len()),
            transfers: Vec::with_capacity(outcomes.len()),
            attempts: Vec::new(),
            compute_seconds: self.config.measure_wallclock.then(Vec::new),
        };
        let mut states = Vec::with_capacity(outcomes.len());
        for o in outcomes {
            record.nums.push(o.num);
            record.searches.push(o.s);
            record.transfers.push(o.transfers);
            record.attempts.extend(o.attempts);
            if let Some(secs) = record.compute_seconds.as_mut() {
                secs.push(o.seconds);
            }
            states.push(o.state);
        }
        self.states = states;
        self.round = k;
        Ok(record)
    }

    fn node_update(&self, i: usize, k: usize) -> Result<NodeOutcome> {
        let started = self.config.measure_wallclock.then(Instant::now);
        let mut outcome = match self.config.variant {
            Variant::DAdmm => self.dadmm_node(i),
            Variant::Dsccd => self.dsccd_node(i, k),
            Variant::Sccd => self.sccd_node(i, k),
        }?;
        if let Some(t) = started {
            outcome.seconds = t.elapsed().as_secs_f64();
        }
        Ok(outcome)
    }

    fn neighbor_values(&self, i: usize) -> Result<Vec<ArrayView1<'_, f64>>> {
        self.graph
            .neighbors(i)?
            .iter()
            .map(|&j| {
                self.states
                    .get(j)
                    .map(|s| s.x.view())
                    .ok_or(Error::MissingNeighbor { node: i, neighbor: j })
            })
            .collect()
    }

    fn refreshed_cache(&self, i: usize, picked: &[usize], k: usize) -> Vec<CacheEntry> {
        let mut cache = self.states[i].cache.clone();
        for entry in cache.iter_mut() {
            if picked.binary_search(&entry.neighbor).is_ok() {
                entry.x = self.states[entry.neighbor].x.clone();
                entry.tag = k - 1;
            }
        }
        cache
    }

    fn dadmm_node(&self, i: usize) -> Result<NodeOutcome> {
        let st = &self.states[i];
        let values = self.neighbor_values(i)?;
        let p = p_update_full(st.p.view(), st.x.view(), &values, self.config.c);
        let x = x_update_dadmm(
            &self.problem.locals[i],
            &self.problem.regularizer,
            st.x.view(),
            &values,
            p.view(),
            self.config.c,
            &self.config.inner,
        )?;
        let degree = values.len();
        let cache = st
            .cache
            .iter()
            .zip(&values)
            .map(|(e, v)| CacheEntry {
                neighbor: e.neighbor,
                x: v.to_owned(),
                tag: self.round,
            })
            .collect();
        Ok(NodeOutcome {
            state: NodeState {
                id: i,
                x,
                p,
                cache,
                num_comm: degree.max(1),
            },
            num: degree,
            s: 0,
            transfers: degree,
            attempts: Vec::new(),
            seconds: 0.0,
        })
    }

    fn dsccd_node(&self, i: usize, k: usize) -> Result<NodeOutcome> {
        let st = &self.states[i];
        let values = self.neighbor_values(i)?;
        let p = p_update_full(st.p.view(), st.x.view(), &values, self.config.c);
        let g = &p - &st.p;
        let x = x_update_sccd(
            &self.problem.locals[i],
            &self.problem.regularizer,
            st.x.view(),
            p.view(),
            g.view(),
            self.config.eta(k),
            &self.config.inner,
            false,
        )?;
        let neighbors = self.graph.neighbors(i)?;
        Ok(NodeOutcome {
            state: NodeState {
                id: i,
                x,
                p,
                cache: self.refreshed_cache(i, neighbors, k),
                num_comm: neighbors.len(),
            },
            num: neighbors.len(),
            s: 0,
            transfers: neighbors.len(),
            attempts: Vec::new(),
            seconds: 0.0,
        })
    }

    fn sccd_node(&self, i: usize, k: usize) -> Result<NodeOutcome> {
        let cfg = &self.config;
        let st = &self.states[i];
        let local = &self.problem.locals[i];
        let reg = &self.problem.regularizer;
        let eta = cfg.eta(k);
        let weights = adapt::sampling_weights(i, st.x.view(), &st.cache)?;
        let mut rng = seed::stream(&[seed::domain::NODE_ROUND, cfg.master_seed, i as u64, k as u64]);

        let params = SearchParams {
            stepsize: cfg.stepsize,
            c_cmp: cfg.c_cmp,
            c_cmm: cfg.c_cmm(),
            mode: cfg.search_return,
        };
        let start = adapt::initial_num(k, st.cache.len(), st.num_comm);
        let search = adapt::search_num(start, &params, |num| {
            let picks = adapt::select_nodes(&weights, num, &mut rng);
            let selected = cached_selection(&weights, &st.cache, &picks);
            let g = grad_h(i, st.x.view(), &selected, cfg.c)?;
            let p_trial = &st.p + &g;
            let x_hat = x_update_sccd(local, reg, st.x.view(), p_trial.view(), g.view(), eta, &cfg.inner, true)?;
            let gamma = adapt::gamma(&self.problem, i, st.x.view(), x_hat.view(), &st.cache);
            Ok((gamma, x_hat))
        })?;

        let picks = adapt::select_nodes(&weights, search.num, &mut rng);
        let selected: Vec<Selected> = picks
            .iter()
            .map(|&j| Selected {
                node: j,
                x: self.states[j].x.view(),
                weight: weights.weight_of(j).unwrap_or(0.0),
            })
            .collect();
        let g = grad_h(i, st.x.view(), &selected, cfg.c)?;
        let p = &st.p + &g;
        let x = x_update_sccd(local, reg, st.x.view(), p.view(), g.view(), eta, &cfg.inner, false)?;

        let mut distinct = picks.clone();
        distinct.sort_unstable();
        distinct.dedup();
        let transfers = if cfg.count_distinct { distinct.len() } else { picks.len() };
        let attempts = search
            .attempts
            .iter()
            .map(|a| AttemptLog {
                node: i,
                s: a.s,
                num: a.num,
                gamma: a.gamma,
                eval: a.eval,
            })
            .collect();
        Ok(NodeOutcome {
            state: NodeState {
                id: i,
                x,
                p,
                cache: self.refreshed_cache(i, &distinct, k),
                num_comm: search.num,
            },
            num: search.num,
            s: search.s,
            transfers,
            attempts,
            seconds: 0.0,
        })
    }
}

fn cached_selection<'a>(weights: &SamplingWeights, cache: &'a [CacheEntry], picks: &[usize]) -> Vec<Selected<'a>> {
    picks
        .iter()
        .map(|&j| {
            let slot = weights.slot_of(j).expect("picked node is a neighbor");
            Selected {
                node: j,
                x: cache[slot].x.view(),
                weight: weights.weights[slot],
            }
        })
        .collect()
}

/// Applies one DSCCD round to `states` and returns the next states.
pub fn dsccd_step(states: &[NodeState], graph: &Graph, problem: &Problem, config: &RunConfig, round: usize) -> Result<Vec<NodeState>> {
    let mut sim = Simulation::new(
        Arc::new(graph.clone()),
        Arc::new(problem.clone()),
        RunConfig {
            variant: Variant::Dsccd,
            ..*config
        },
    )?;
    sim.set_states(states.to_vec())?;
    sim.round = round.saturating_sub(1);
    sim.step()?;
    Ok(sim.states)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::QuadraticLoss;
    use ndarray::array;
    use rand::Rng;

    fn quad(theta: f64, weight: f64) -> LocalObjective {
        LocalObjective::Quadratic(QuadraticLoss {
            target: array![theta],
            weight,
        })
    }

    fn scalar_problem(thetas: &[f64]) -> Problem {
        Problem::new(thetas.iter().map(|&t| quad(t, 1.0)).collect(), Regularizer::none(RegularizerKind::L2)).unwrap()
    }

    fn tight() -> InnerSettings {
        InnerSettings {
            l2_tolerance: 1e-12,
            ..InnerSettings::default()
        }
    }

    #[test]
    fn p_update_full_cases() {
        let p = p_update_full(array![0.0].view(), array![2.0].view(), &[array![1.0].view(), array![3.0].view()], 1.0);
        assert_eq!(p[0], 0.0);
        let same = p_update_full(array![0.5, -1.0].view(), array![1.0, 2.0].view(), &[array![1.0, 2.0].view()], 3.0);
        assert_eq!(same, array![0.5, -1.0]);
    }

    #[test]
    fn p_update_full_matches_direct_sum_on_star() {
        let mut rng = seed::stream(&[11]);
        let xs: Vec<Array1<f64>> = (0..5).map(|_| (0..3).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()).collect();
        let p0: Array1<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
        let views: Vec<_> = xs[1..].iter().map(|v| v.view()).collect();
        let got = p_update_full(p0.view(), xs[0].view(), &views, 0.7);
        for e in 0..3 {
            let mut want = p0[e];
            for x in &xs[1..] {
                want += 0.7 * (xs[0][e] - x[e]);
            }
            assert!((got[e] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn sampled_update_cases() {
        let xj = array![0.0];
        let sel = [Selected {
            node: 1,
            x: xj.view(),
            weight: 1.0,
        }];
        let p = p_update_sampled(0, array![0.2].view(), array![1.0].view(), &sel, 2.0).unwrap();
        assert!((p[0] - 2.2).abs() < 1e-15);
        assert_eq!(grad_h(0, array![1.0].view(), &sel, 2.0).unwrap()[0], 2.0);
        let zero = [Selected { weight: 0.0, ..sel[0] }];
        assert!(matches!(grad_h(0, array![1.0].view(), &zero, 2.0), Err(Error::ZeroWeight { node: 0, neighbor: 1 })));
    }

    #[test]
    fn all_neighbors_with_uniform_weights_reproduce_full_sum() {
        let x = array![1.0, -2.0];
        let ns = [array![0.5, 0.0], array![3.0, 1.0], array![-1.0, -1.0]];
        let sel: Vec<Selected> = ns
            .iter()
            .enumerate()
            .map(|(j, v)| Selected {
                node: j + 1,
                x: v.view(),
                weight: 1.0 / 3.0,
            })
            .collect();
        let views: Vec<_> = ns.iter().map(|v| v.view()).collect();
        let sampled = p_update_sampled(0, array![0.0, 0.0].view(), x.view(), &sel, 0.4).unwrap();
        let full = p_update_full(array![0.0, 0.0].view(), x.view(), &views, 0.4);
        assert!((&sampled - &full).iter().all(|d| d.abs() < 1e-14));
    }

    #[test]
    fn grad_h_matches_finite_differences() {
        let mut rng = seed::stream(&[12]);
        let x_prev: Array1<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
        let others: Vec<Array1<f64>> = (0..3).map(|_| (0..4).map(|_| rng.random::<f64>()).collect()).collect();
        let sel: Vec<Selected> = others
            .iter()
            .enumerate()
            .map(|(j, v)| Selected {
                node: j,
                x: v.view(),
                weight: 0.2 + 0.1 * j as f64,
            })
            .collect();
        let g = grad_h(9, x_prev.view(), &sel, 0.8).unwrap();
        let h = 1e-5;
        for e in 0..4 {
            let mut up = x_prev.clone();
            up[e] += h;
            let mut dn = x_prev.clone();
            dn[e] -= h;
            let fd = (h_value(up.view(), x_prev.view(), &sel, 0.8) - h_value(dn.view(), x_prev.view(), &sel, 0.8)) / (2.0 * h);
            assert!((fd - g[e]).abs() < 1e-6, "{fd} vs {}", g[e]);
        }
    }

    #[test]
    fn x_update_closed_forms() {
        let zero = quad(0.0, 0.0);
        let reg = Regularizer::none(RegularizerKind::L2);
        let x_prev = array![0.7];
        let same = x_update_sccd_l2(&zero, &reg, x_prev.view(), array![0.0].view(), array![0.0].view(), 0.2, &tight(), false).unwrap();
        assert!((same[0] - 0.7).abs() < 1e-12);
        let x = x_update_sccd_l2(&zero, &reg, x_prev.view(), array![0.3].view(), array![0.5].view(), 0.2, &tight(), false).unwrap();
        assert!((x[0] - (0.7 - 0.1 * 0.8)).abs() < 1e-10);
    }

    #[test]
    fn l1_update_with_huge_threshold_is_zero() {
        let zero = quad(0.0, 0.0);
        let reg = Regularizer::l1(1e6, 1.0);
        let x = x_update_sccd_l1(&zero, &reg, array![0.5, -0.3, 0.9].view(), array![0.0, 0.0, 0.0].view(), array![0.0, 0.0, 0.0].view(), 0.2, &InnerSettings::default()).unwrap();
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dadmm_update_cases() {
        let reg = Regularizer::none(RegularizerKind::L2);
        // isolated node minimizes (x - 2)^2 + 0.4 x
        let x = x_update_dadmm(&quad(2.0, 1.0), &reg, array![0.0].view(), &[], array![0.4].view(), 1.0, &tight()).unwrap();
        assert!((x[0] - 1.8).abs() < 1e-10);
        let zero = quad(0.0, 0.0);
        let n = array![0.3];
        let x = x_update_dadmm(&zero, &reg, array![0.3].view(), &[n.view(), n.view()], array![0.0].view(), 0.5, &tight()).unwrap();
        assert!((x[0] - 0.3).abs() < 1e-10);
    }

    fn run(variant: Variant, graph: Graph, thetas: &[f64], c: f64, d: f64, rounds: usize) -> Simulation {
        let mut cfg = RunConfig::new(variant, c);
        cfg.d_prox = d;
        cfg.inner = tight();
        let mut sim = Simulation::new(Arc::new(graph), Arc::new(scalar_problem(thetas)), cfg).unwrap();
        for _ in 0..rounds {
            sim.step().unwrap();
        }
        sim
    }

    #[test]
    fn dadmm_two_nodes_reach_pooled_optimum() {
        let sim = run(Variant::DAdmm, Graph::complete(2), &[1.0, 3.0], 1.0, 1.0, 200);
        for s in sim.states() {
            assert!((s.x[0] - 2.0).abs() < 1e-6, "{}", s.x[0]);
        }
    }

    #[test]
    fn zero_data_dadmm_stays_zero() {
        let sim = run(Variant::DAdmm, Graph::complete(2), &[0.0, 0.0], 1.0, 1.0, 5);
        assert!(sim.states().iter().all(|s| s.x[0] == 0.0 && s.p[0] == 0.0));
    }

    #[test]
    fn sccd_reaches_consensus_on_quadratics() {
        // Sampled dual increments do not cancel across an edge, so the sum of
        // duals drifts and the consensus point differs from the pooled optimum
        // in any single realization; only agreement is asserted here.
        let thetas = [1.0, -2.0, 0.5, 3.0, -1.0, 2.0];
        let sim = run(Variant::Sccd, Graph::complete(6), &thetas, 0.5, 1.0, 300);
        let mean = sim.states().iter().map(|s| s.x[0]).sum::<f64>() / 6.0;
        for s in sim.states() {
            assert!((s.x[0] - mean).abs() < 1e-4, "{} vs {mean}", s.x[0]);
        }
        let dual_sum: f64 = sim.states().iter().map(|s| s.p[0]).sum();
        let grad_sum: f64 = thetas.iter().map(|t| 2.0 * (mean - t)).sum();
        assert!((dual_sum + grad_sum).abs() < 1e-3);
    }

    #[test]
    fn dsccd_first_p_equals_full_update() {
        let graph = Graph::path(3);
        let problem = scalar_problem(&[1.0, 0.0, -1.0]);
        let mut states: Vec<NodeState> = (0..3).map(|i| NodeState::initial(i, 1, graph.neighbors(i).unwrap())).collect();
        for (s, v) in states.iter_mut().zip([0.4, -0.2, 0.9]) {
            s.x[0] = v;
        }
        let cfg = RunConfig::new(Variant::Dsccd, 0.6);
        let next = dsccd_step(&states, &graph, &problem, &cfg, 1).unwrap();
        for i in 0..3 {
            let views: Vec<_> = graph.neighbors(i).unwrap().iter().map(|&j| states[j].x.view()).collect();
            let want = p_update_full(states[i].p.view(), states[i].x.view(), &views, 0.6);
            assert_eq!(next[i].p, want);
        }
    }

    #[test]
    fn rounds_are_deterministic_and_caches_monotone() {
        let graph = topology::generate_erdos_renyi(8, 0.6, 3).unwrap();
        let thetas: Vec<f64> = (0..8).map(|i| i as f64 - 3.5).collect();
        let mk = || {
            let mut cfg = RunConfig::new(Variant::Sccd, 0.4);
            cfg.master_seed = 77;
            Simulation::new(Arc::new(graph.clone()), Arc::new(scalar_problem(&thetas)), cfg).unwrap()
        };
        let (mut a, mut b) = (mk(), mk());
        let mut prev_nums = [usize::MAX; 8];
        for _ in 0..30 {
            let ra = a.step().unwrap();
            let rb = b.step().unwrap();
            assert_eq!(ra, rb);
            for (n, p) in ra.nums.iter().zip(prev_nums.iter_mut()) {
                assert!(*n <= *p);
                *p = *n;
            }
            for (sa, sb) in a.states().iter().zip(b.states()) {
                assert_eq!(sa.x, sb.x);
                assert!(sa.cache.iter().all(|e| e.tag < a.round()));
            }
        }
    }
}
