//! Runs every (cell, repetition) of an experiment and writes its artifacts.
//!
//! Layout of the output directory:
//!
//! ```text
//! spec.toml                 the spec actually run
//! topology.txt              edge list of the fixed graph
//! traces/<cell>_rep<r>.csv  per-round trace
//! attempts/<cell>_rep<r>.csv  search attempts (when enabled)
//! curves/<cell>.csv         round-wise means across repetitions
//! summary.csv               one row per (cell, repetition)
//! status.csv                convergence flag, c, obj* and errors per run
//! aggregate.csv             mean and std per cell
//! cache/objstar-<sha>.txt   obj* keyed by dataset hash
//! datasets/rep<r>.bin       synthesized data (when enabled)
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;

use crate::accounting::{self, CostLedger, DelayModel, DelaySummary};
use crate::engine::{AttemptLog, RunConfig, Simulation, Variant};
use crate::error::{Error, Result};
use crate::harness::config::{Cell, ExperimentSpec};
use crate::harness::io::{self, AggregateRow, AttemptRow, CurveRow, StatusRow, SummaryRow, TraceRow};
use crate::problem::{centralized_reference, synthesize, Dataset, Problem};
use crate::seed;
use crate::topology::{self, Graph};

/// Per-round data of a single simulation, before costs are applied.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundData {
    pub round: usize,
    pub acc: f64,
    pub cserr: f64,
    pub nums: Vec<usize>,
    pub searches: Vec<usize>,
    pub eta_warning: bool,
    pub compute_seconds: Option<Vec<f64>>,
    pub attempts: Vec<AttemptLog>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub rounds: Vec<RoundData>,
    pub converged: bool,
    pub error: Option<String>,
}

impl Trajectory {
    pub fn iterations(&self) -> usize {
        self.rounds.len()
    }

    /// Every node's count never increased from one round to the next.
    pub fn nums_nonincreasing(&self) -> bool {
        self.rounds.windows(2).all(|w| w[0].nums.iter().zip(&w[1].nums).all(|(a, b)| b <= a))
    }

    pub fn final_mean_num(&self) -> f64 {
        self.rounds.last().map_or(0.0, |r| mean_usize(&r.nums))
    }
}

fn mean_usize(v: &[usize]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<usize>() as f64 / v.len() as f64
    }
}

/// Runs rounds until both thresholds hold or `max_iters` is reached.
/// Solver failures end the run and are reported in the trajectory.
pub fn simulate(graph: Arc<Graph>, problem: Arc<Problem>, obj_star: f64, config: RunConfig, log_attempts: bool) -> Trajectory {
    let mut out = Trajectory {
        rounds: Vec::new(),
        converged: false,
        error: None,
    };
    let mut sim = match Simulation::new(graph, problem, config) {
        Ok(s) => s,
        Err(e) => {
            out.error = Some(e.to_string());
            return out;
        }
    };
    for _ in 0..config.max_iters {
        let step = sim.step().and_then(|rec| {
            let xs: Vec<_> = sim.states().iter().map(|s| s.x.view()).collect();
            accounting::metrics(&xs, obj_star, sim.problem()).map(|m| (rec, m))
        });
        let (rec, m) = match step {
            Ok(v) => v,
            Err(e) => {
                out.error = Some(e.to_string());
                return out;
            }
        };
        out.rounds.push(RoundData {
            round: rec.round,
            acc: m.acc,
            cserr: m.cserr,
            nums: rec.transfers,
            searches: rec.searches,
            eta_warning: rec.eta_warning,
            compute_seconds: rec.compute_seconds,
            attempts: if log_attempts { rec.attempts } else { Vec::new() },
        });
        if accounting::should_stop(&m, config.acc_threshold, config.cserr_threshold) {
            out.converged = true;
            break;
        }
    }
    out
}

/// Charges a trajectory at the given unit costs.
pub fn cost_trajectory(t: &Trajectory, c_cmp: f64, c_cmm: f64) -> (Vec<TraceRow>, CostLedger) {
    let mut ledger = CostLedger::new();
    let rows = t
        .rounds
        .iter()
        .map(|r| {
            let (comm, comp) = {
                let rc = ledger.record_round(r.round, &r.nums, &r.searches, c_cmp, c_cmm);
                (rc.comm_cost, rc.comp_cost)
            };
            if let Some(secs) = &r.compute_seconds {
                ledger.attach_seconds(secs.clone());
            }
            TraceRow {
                round: r.round,
                acc: r.acc,
                cserr: r.cserr,
                mean_num: mean_usize(&r.nums),
                comm_cost_round: comm,
                comp_cost_round: comp,
                comm_cum: ledger.cum_comm,
                comp_cum: ledger.cum_comp,
                eta_warning: r.eta_warning,
            }
        })
        .collect();
    (rows, ledger)
}

/// Scalar outcome of one (cell, repetition).
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub cell: Cell,
    pub repetition: usize,
    pub seed: u64,
    pub obj_star: f64,
    pub converged: bool,
    pub error: Option<String>,
    pub iterations: usize,
    pub comm_total: f64,
    pub comp_total: f64,
    pub delays: DelaySummary,
    /// `sum_k max_i num_i`, the communication delay in units of `tau`.
    pub comm_delay_units: f64,
    /// `sum_k max_i (s_i + 1)`.
    pub comp_delay_units: f64,
    pub final_mean_num: f64,
    pub nums_nonincreasing: bool,
    /// First round with `acc` below its threshold.
    pub acc_crossing: Option<usize>,
    /// First round with `cserr` below its threshold.
    pub cserr_crossing: Option<usize>,
    pub eta_warnings: usize,
}

impl RunSummary {
    pub fn total_cost(&self) -> f64 {
        self.comm_total + self.comp_total
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub spec: ExperimentSpec,
    pub out_dir: PathBuf,
    pub graph: Graph,
    pub cells: Vec<Cell>,
    /// Ordered by cell, then repetition.
    pub runs: Vec<RunSummary>,
    pub aggregates: Vec<AggregateRow>,
}

impl ExperimentOutcome {
    pub fn runs_for(&self, variant: Variant, co_rat: f64, stepsize: usize) -> Vec<&RunSummary> {
        self.runs
            .iter()
            .filter(|r| r.cell.variant == variant && r.cell.co_rat == co_rat && (variant != Variant::Sccd || r.cell.stepsize == stepsize))
            .collect()
    }
}

/// Seed of repetition `rep`; also the engine's master seed for that repetition.
pub fn repetition_seed(master: u64, rep: usize) -> u64 {
    seed::derive(&[seed::domain::REPETITION, master, rep as u64])
}

pub fn build_graph(spec: &ExperimentSpec) -> Result<Graph> {
    match &spec.graph.topology_file {
        Some(path) => {
            let g = Graph::read(path)?;
            if !g.is_connected() {
                return Err(Error::Config(format!("topology {} is not connected", path.display())));
            }
            Ok(g)
        }
        None => {
            let s = spec.graph.seed.unwrap_or_else(|| seed::derive(&[seed::domain::TOPOLOGY, spec.master_seed]));
            topology::generate_erdos_renyi(spec.graph.n, spec.graph.p, s)
        }
    }
}

pub fn build_dataset(spec: &ExperimentSpec, data_seed: u64) -> Result<Dataset> {
    let d = synthesize(&spec.synthesis(data_seed), spec.regularizer())?;
    if spec.data.pooled {
        d.repartition(spec.graph.n)
    } else {
        Ok(d)
    }
}

struct Instance {
    problem: Arc<Problem>,
    obj_star: f64,
    seed: u64,
}

/// Cells that share dynamics: only SCCD's trajectory depends on co_rat and
/// the stepsize, the other variants are charged differently but run once.
fn dynamics_key(cell: &Cell) -> (Variant, u64, u64, usize) {
    match cell.variant {
        Variant::Sccd => (cell.variant, cell.c.to_bits(), cell.co_rat.to_bits(), cell.stepsize),
        v => (v, cell.c.to_bits(), 0, 0),
    }
}

fn first_below(rows: &[TraceRow], pick: impl Fn(&TraceRow) -> f64, thr: f64) -> Option<usize> {
    rows.iter().find(|r| pick(r) < thr).map(|r| r.round)
}

/// Runs the whole experiment, writing artifacts under `out_dir`.
pub fn run_experiment(spec: &ExperimentSpec, out_dir: &Path) -> Result<ExperimentOutcome> {
    spec.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    fs::write(out_dir.join("spec.toml"), spec.to_toml()?).map_err(|e| Error::io(out_dir.join("spec.toml"), e))?;
    let graph = build_graph(spec)?;
    if graph.node_count() != spec.graph.n {
        return Err(Error::Config(format!(
            "topology has {} nodes but the spec asks for {}",
            graph.node_count(),
            spec.graph.n
        )));
    }
    graph.write(&out_dir.join("topology.txt"))?;
    let graph = Arc::new(graph);
    let cache_dir = out_dir.join("cache");

    let instances = (0..spec.repetitions)
        .into_par_iter()
        .map(|rep| {
            let seed = repetition_seed(spec.master_seed, rep);
            let data = build_dataset(spec, seed)?;
            if spec.save_datasets {
                io::write_dataset(&out_dir.join("datasets").join(format!("rep{rep}.bin")), &data)?;
            }
            let problem = Problem::from_dataset(&data)?;
            let obj_star = io::cached_obj_star(&cache_dir, &io::dataset_hash(&data), || Ok(centralized_reference(&problem)?.obj_star))?;
            Ok(Instance {
                problem: Arc::new(problem),
                obj_star,
                seed,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let cells = spec.cells()?;
    let mut groups: BTreeMap<(Variant, u64, u64, usize), Vec<usize>> = BTreeMap::new();
    for (idx, cell) in cells.iter().enumerate() {
        groups.entry(dynamics_key(cell)).or_default().push(idx);
    }
    let jobs: Vec<(usize, Vec<usize>)> = (0..spec.repetitions)
        .flat_map(|rep| groups.values().map(move |members| (rep, members.clone())))
        .collect();

    let tau = accounting::tau_from_rate(spec.data.dim, spec.delay.bits_per_value, spec.delay.rate_bps);
    let delay_model = DelayModel {
        tau,
        seconds_per_unit: spec.delay.seconds_per_unit,
        mode: spec.delay.mode,
    };

    let results = jobs
        .par_iter()
        .map(|(rep, members)| {
            let inst = &instances[*rep];
            let first = cells[members[0]];
            let traj = simulate(
                graph.clone(),
                inst.problem.clone(),
                inst.obj_star,
                spec.run_config(&first, inst.seed),
                spec.log_attempts,
            );
            members
                .iter()
                .map(|&ci| {
                    let cell = cells[ci];
                    let (rows, ledger) = cost_trajectory(&traj, spec.c_cmp, cell.co_rat * spec.c_cmp);
                    let stem = format!("{}_rep{rep}", cell.label());
                    io::write_csv(&out_dir.join("traces").join(format!("{stem}.csv")), &rows)?;
                    if spec.log_attempts {
                        let attempts: Vec<AttemptRow> = traj
                            .rounds
                            .iter()
                            .flat_map(|r| {
                                r.attempts.iter().map(move |a| AttemptRow {
                                    round: r.round,
                                    node: a.node,
                                    s: a.s,
                                    num: a.num,
                                    gamma: a.gamma,
                                    eval: a.eval,
                                })
                            })
                            .collect();
                        io::write_csv(&out_dir.join("attempts").join(format!("{stem}.csv")), &attempts)?;
                    }
                    let delays = accounting::delay_summary(&ledger, &delay_model)?;
                    let summary = RunSummary {
                        cell,
                        repetition: *rep,
                        seed: inst.seed,
                        obj_star: inst.obj_star,
                        converged: traj.converged,
                        error: traj.error.clone(),
                        iterations: traj.iterations(),
                        comm_total: ledger.cum_comm,
                        comp_total: ledger.cum_comp,
                        delays,
                        comm_delay_units: traj.rounds.iter().map(|r| r.nums.iter().copied().max().unwrap_or(0) as f64).sum(),
                        comp_delay_units: traj.rounds.iter().map(|r| (r.searches.iter().copied().max().unwrap_or(0) + 1) as f64).sum(),
                        final_mean_num: traj.final_mean_num(),
                        nums_nonincreasing: traj.nums_nonincreasing(),
                        acc_crossing: first_below(&rows, |r| r.acc, spec.acc_threshold),
                        cserr_crossing: first_below(&rows, |r| r.cserr, spec.cserr_threshold),
                        eta_warnings: traj.rounds.iter().filter(|r| r.eta_warning).count(),
                    };
                    Ok((ci, summary))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut runs: Vec<(usize, RunSummary)> = results.into_iter().flatten().collect();
    runs.sort_by_key(|(ci, r)| (*ci, r.repetition));
    let runs: Vec<RunSummary> = runs.into_iter().map(|(_, r)| r).collect();

    let scenario = scenario_name(spec);
    let summary_rows: Vec<SummaryRow> = runs
        .iter()
        .map(|r| SummaryRow {
            scenario: scenario.clone(),
            variant: r.cell.variant.to_string(),
            co_rat: r.cell.co_rat,
            stepsize: r.cell.stepsize,
            n: spec.graph.n,
            p: spec.graph.p,
            iterations: r.iterations,
            comm_total: r.comm_total,
            comp_total: r.comp_total,
            total_cost: r.total_cost(),
            comm_delay: r.delays.comm_delay,
            comp_delay: r.delays.comp_delay,
            total_delay: r.delays.total_delay,
            seed: r.seed,
        })
        .collect();
    io::write_csv(&out_dir.join("summary.csv"), &summary_rows)?;
    let status_rows: Vec<StatusRow> = runs
        .iter()
        .map(|r| StatusRow {
            variant: r.cell.variant.to_string(),
            co_rat: r.cell.co_rat,
            stepsize: r.cell.stepsize,
            repetition: r.repetition,
            seed: r.seed,
            c: r.cell.c,
            converged: r.converged,
            final_mean_num: r.final_mean_num,
            obj_star: r.obj_star,
            error: r.error.clone().unwrap_or_default(),
        })
        .collect();
    io::write_csv(&out_dir.join("status.csv"), &status_rows)?;

    let aggregates: Vec<AggregateRow> = cells
        .iter()
        .map(|cell| {
            let rs: Vec<&RunSummary> = runs.iter().filter(|r| r.cell == *cell).collect();
            aggregate(&scenario, spec, cell, &rs)
        })
        .collect();
    io::write_csv(&out_dir.join("aggregate.csv"), &aggregates)?;

    for cell in &cells {
        let traces = (0..spec.repetitions)
            .map(|rep| io::read_csv::<TraceRow>(&out_dir.join("traces").join(format!("{}_rep{rep}.csv", cell.label()))))
            .collect::<Result<Vec<_>>>()?;
        io::write_csv(&out_dir.join("curves").join(format!("{}.csv", cell.label())), &curve(&traces))?;
    }

    Ok(ExperimentOutcome {
        spec: spec.clone(),
        out_dir: out_dir.to_path_buf(),
        graph: (*graph).clone(),
        cells,
        runs,
        aggregates,
    })
}

fn scenario_name(spec: &ExperimentSpec) -> String {
    match spec.scenario {
        crate::problem::Scenario::L1 => "l1".into(),
        crate::problem::Scenario::L2 => "l2".into(),
    }
}

/// Sample mean and standard deviation (`n - 1` denominator).
pub fn mean_std(xs: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = xs.into_iter().collect();
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

fn aggregate(scenario: &str, spec: &ExperimentSpec, cell: &Cell, rs: &[&RunSummary]) -> AggregateRow {
    let (iterations_mean, iterations_std) = mean_std(rs.iter().map(|r| r.iterations as f64));
    let (comm_total_mean, comm_total_std) = mean_std(rs.iter().map(|r| r.comm_total));
    let (comp_total_mean, comp_total_std) = mean_std(rs.iter().map(|r| r.comp_total));
    let (total_cost_mean, total_cost_std) = mean_std(rs.iter().map(|r| r.total_cost()));
    AggregateRow {
        scenario: scenario.to_string(),
        variant: cell.variant.to_string(),
        co_rat: cell.co_rat,
        stepsize: cell.stepsize,
        n: spec.graph.n,
        p: spec.graph.p,
        repetitions: rs.len(),
        converged: rs.iter().filter(|r| r.converged).count(),
        failed: rs.iter().filter(|r| r.error.is_some()).count(),
        iterations_mean,
        iterations_std,
        comm_total_mean,
        comm_total_std,
        comp_total_mean,
        comp_total_std,
        total_cost_mean,
        total_cost_std,
        comm_delay_mean: mean_std(rs.iter().map(|r| r.delays.comm_delay)).0,
        comp_delay_mean: mean_std(rs.iter().map(|r| r.delays.comp_delay)).0,
        total_delay_mean: mean_std(rs.iter().map(|r| r.delays.total_delay)).0,
    }
}

fn curve(traces: &[Vec<TraceRow>]) -> Vec<CurveRow> {
    let longest = traces.iter().map(Vec::len).max().unwrap_or(0);
    (0..longest)
        .map(|k| {
            let rows: Vec<&TraceRow> = traces.iter().filter_map(|t| t.get(k)).collect();
            let n = rows.len() as f64;
            CurveRow {
                round: k + 1,
                runs: rows.len(),
                acc: rows.iter().map(|r| r.acc).sum::<f64>() / n,
                cserr: rows.iter().map(|r| r.cserr).sum::<f64>() / n,
                mean_num: rows.iter().map(|r| r.mean_num).sum::<f64>() / n,
            }
        })
        .collect()
}
