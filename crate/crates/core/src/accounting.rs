//! Cost ledger, convergence metrics and the synchronous delay model.

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::Problem;

#[derive(Debug, Clone, PartialEq)]
pub struct RoundCost {
    pub round: usize,
    /// Transmissions charged per node.
    pub nums: Vec<usize>,
    /// Last search index per node; the node computed `s + 1` times.
    pub searches: Vec<usize>,
    pub comm_cost: f64,
    pub comp_cost: f64,
    pub compute_seconds: Option<Vec<f64>>,
}

/// Running totals of communication and computation units.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CostLedger {
    pub cum_comm: f64,
    pub cum_comp: f64,
    pub per_round: Vec<RoundCost>,
}

impl CostLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Charges `sum_i num_i C_cmm` and `sum_i (s_i + 1) C_cmp`.
    pub fn record_round(&mut self, round: usize, nums: &[usize], searches: &[usize], c_cmp: f64, c_cmm: f64) -> &RoundCost {
        let comm_cost = nums.iter().map(|&n| n as f64 * c_cmm).sum();
        let comp_cost = searches.iter().map(|&s| (s + 1) as f64 * c_cmp).sum();
        self.cum_comm += comm_cost;
        self.cum_comp += comp_cost;
        self.per_round.push(RoundCost {
            round,
            nums: nums.to_vec(),
            searches: searches.to_vec(),
            comm_cost,
            comp_cost,
            compute_seconds: None,
        });
        self.per_round.last().expect("just pushed")
    }

    /// Attaches measured per-node seconds to the latest round.
    pub fn attach_seconds(&mut self, seconds: Vec<f64>) {
        if let Some(last) = self.per_round.last_mut() {
            last.compute_seconds = Some(seconds);
        }
    }

    pub fn total(&self) -> f64 {
        self.cum_comm + self.cum_comp
    }

    pub fn rounds(&self) -> usize {
        self.per_round.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// `(obj(xbar) - obj*) / obj*`
    pub acc: f64,
    /// `sum_i ||xbar - x_i||^2 / N`
    pub cserr: f64,
    pub objective: f64,
}

pub fn mean_iterate(xs: &[ArrayView1<f64>]) -> Array1<f64> {
    let mut mean = Array1::zeros(xs.first().map_or(0, |x| x.len()));
    for x in xs {
        mean += x;
    }
    if !xs.is_empty() {
        mean /= xs.len() as f64;
    }
    mean
}

pub fn metrics(xs: &[ArrayView1<f64>], obj_star: f64, problem: &Problem) -> Result<Metrics> {
    if !(obj_star > 0.0) {
        return Err(Error::InvalidArgument(format!("obj* must be > 0, got {obj_star}")));
    }
    if xs.iter().any(|x| x.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite("node iterate"));
    }
    let mean = mean_iterate(xs);
    let cserr = xs
        .iter()
        .map(|x| {
            let d = &mean - x;
            d.dot(&d)
        })
        .sum::<f64>()
        / xs.len().max(1) as f64;
    let objective = problem.global_objective(mean.view());
    Ok(Metrics {
        acc: (objective - obj_star) / obj_star,
        cserr,
        objective,
    })
}

pub fn should_stop(m: &Metrics, acc_threshold: f64, cserr_threshold: f64) -> bool {
    m.acc < acc_threshold && m.cserr < cserr_threshold
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayMode {
    /// `(s_i + 1)` units times a configured number of seconds per unit.
    #[default]
    AbstractUnits,
    MeasuredWallclock,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayModel {
    /// Seconds per transmission.
    pub tau: f64,
    pub seconds_per_unit: f64,
    pub mode: DelayMode,
}

/// Transmission time of one `dim`-value packet.
pub fn tau_from_rate(dim: usize, bits_per_value: usize, rate_bps: f64) -> f64 {
    (dim * bits_per_value) as f64 / rate_bps
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DelaySummary {
    pub comm_delay: f64,
    pub comp_delay: f64,
    pub total_delay: f64,
}

/// Each round waits for its slowest node: `sum_k tau max_i num_i` and
/// `sum_k max_i t_i`.
pub fn delay_summary(ledger: &CostLedger, model: &DelayModel) -> Result<DelaySummary> {
    if !(model.tau > 0.0) {
        return Err(Error::InvalidArgument(format!("tau must be > 0, got {}", model.tau)));
    }
    let mut out = DelaySummary::default();
    for r in &ledger.per_round {
        let max_num = r.nums.iter().copied().max().unwrap_or(0);
        out.comm_delay += model.tau * max_num as f64;
        out.comp_delay += match (model.mode, &r.compute_seconds) {
            (DelayMode::MeasuredWallclock, Some(secs)) => secs.iter().copied().fold(0.0, f64::max),
            (DelayMode::MeasuredWallclock, None) => {
                return Err(Error::InvalidArgument(format!("round {} has no measured compute times", r.round)));
            }
            (DelayMode::AbstractUnits, _) => {
                r.searches.iter().map(|&s| (s + 1) as f64).fold(0.0, f64::max) * model.seconds_per_unit
            }
        };
    }
    out.total_delay = out.comm_delay + out.comp_delay;
    Ok(out)
}
