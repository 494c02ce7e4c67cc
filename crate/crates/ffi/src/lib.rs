//! C ABI over `sccd-core`.
//!
//! Objects are opaque handles created by `*_new`-style constructors and
//! released with the matching `*_free`. Every fallible call returns an
//! [`SccdStatus`]; on failure the message is available from
//! [`sccd_last_error`] on the same thread. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use sccd_core::accounting;
use sccd_core::engine::{RunConfig, Simulation, Variant};
use sccd_core::problem::{centralized_reference, synthesize, Problem, Regularizer, SynthesisSpec};
use sccd_core::topology::{generate_erdos_renyi, laplacian_lambda_max, Graph};
use sccd_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SccdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    GraphDisconnected = 3,
    Solver = 4,
    Io = 5,
    Parse = 6,
    Config = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SccdVariant {
    Dadmm = 0,
    Sccd = 1,
    Dsccd = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SccdScenario {
    L2 = 0,
    L1 = 1,
}

/// Engine parameters. Fill with [`sccd_config_default`] and adjust.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SccdConfig {
    pub variant: SccdVariant,
    pub c: f64,
    pub d_prox: f64,
    pub c_cmp: f64,
    pub co_rat: f64,
    pub stepsize: usize,
    pub master_seed: u64,
    /// Charge distinct picks instead of draws (0 or 1).
    pub count_distinct: u8,
}

/// Totals of one synchronous round.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SccdRoundInfo {
    pub round: usize,
    /// Transfers summed over nodes.
    pub transfers: usize,
    /// Search attempts (`s + 1`) summed over nodes.
    pub computations: usize,
    pub mean_num: f64,
    pub eta_warning: u8,
}

pub struct SccdGraph(Arc<Graph>);

pub struct SccdProblem(Arc<Problem>);

pub struct SccdSimulation(Simulation);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let text = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = text);
}

fn status_of(e: &Error) -> SccdStatus {
    match e {
        Error::GraphDisconnected { .. } => SccdStatus::GraphDisconnected,
        Error::SolverBudget { .. } => SccdStatus::Solver,
        Error::Io { .. } => SccdStatus::Io,
        Error::Parse { .. } | Error::Csv(_) => SccdStatus::Parse,
        Error::Config(_) => SccdStatus::Config,
        _ => SccdStatus::InvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> Result<(), SccdStatus>) -> SccdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SccdStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            SccdStatus::Panic
        }
    }
}

fn fail(e: Error) -> SccdStatus {
    set_error(&e.to_string());
    status_of(&e)
}

fn null(what: &str) -> SccdStatus {
    set_error(&format!("null pointer: {what}"));
    SccdStatus::NullPointer
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, SccdStatus> {
    // SAFETY: the caller guarantees `p` is null or a live handle of type T.
    unsafe { p.as_ref() }.ok_or_else(|| null(what))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), SccdStatus> {
    if out.is_null() {
        return Err(null(what));
    }
    // SAFETY: non-null and, per the caller contract, valid for writes.
    unsafe { out.write(value) };
    Ok(())
}

/// Message of the last failed call on this thread; empty when none.
/// Valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sccd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sccd_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version string"),
    };
    VERSION.as_ptr()
}

/// Connected Erdos-Renyi graph with `n` nodes and edge probability `p`.
///
/// # Safety
/// `out` must be valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn sccd_graph_erdos_renyi(n: usize, p: f64, seed: u64, out: *mut *mut SccdGraph) -> SccdStatus {
    guard(|| {
        let g = generate_erdos_renyi(n, p, seed).map_err(fail)?;
        unsafe { write_out(out, Box::into_raw(Box::new(SccdGraph(Arc::new(g)))), "out") }
    })
}

/// Graph from `edge_count` pairs stored as `edges[2k], edges[2k + 1]`.
///
/// # Safety
/// `edges` must point to `2 * edge_count` readable values; `out` must be
/// valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn sccd_graph_from_edges(
    n: usize,
    edges: *const usize,
    edge_count: usize,
    out: *mut *mut SccdGraph,
) -> SccdStatus {
    guard(|| {
        let flat: &[usize] = if edge_count == 0 {
            &[]
        } else if edges.is_null() {
            return Err(null("edges"));
        } else {
            // SAFETY: caller guarantees 2 * edge_count readable values.
            unsafe { std::slice::from_raw_parts(edges, 2 * edge_count) }
        };
        let pairs: Vec<(usize, usize)> = flat.chunks_exact(2).map(|c| (c[0], c[1])).collect();
        let g = Graph::from_edges(n, &pairs).map_err(fail)?;
        unsafe { write_out(out, Box::into_raw(Box::new(SccdGraph(Arc::new(g)))), "out") }
    })
}

/// # Safety
/// `graph` must be a live handle; `nodes` and `edges` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sccd_graph_size(graph: *const SccdGraph, nodes: *mut usize, edges: *mut usize) -> SccdStatus {
    guard(|| {
        let g = unsafe { as_ref(graph, "graph") }?;
        unsafe {
            write_out(nodes, g.0.node_count(), "nodes")?;
            write_out(edges, g.0.edge_count(), "edges")
        }
    })
}

/// Largest Laplacian eigenvalue.
///
/// # Safety
/// `graph` must be a live handle; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sccd_graph_lambda_max(graph: *const SccdGraph, out: *mut f64) -> SccdStatus {
    guard(|| {
        let g = unsafe { as_ref(graph, "graph") }?;
        unsafe { write_out(out, laplacian_lambda_max(&g.0), "out") }
    })
}

/// # Safety
/// `graph` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sccd_graph_free(graph: *mut SccdGraph) {
    if !graph.is_null() {
        // SAFETY: produced by Box::into_raw in a constructor above.
        drop(unsafe { Box::from_raw(graph) });
    }
}

/// Synthetic logistic-regression instance with the default recipe for
/// `scenario`. `box_bound` is used by the l1 scenario only.
///
/// # Safety
/// `out` must be valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn sccd_problem_synthesize(
    scenario: SccdScenario,
    nodes: usize,
    dim: usize,
    samples: usize,
    lambda: f64,
    box_bound: f64,
    seed: u64,
    out: *mut *mut SccdProblem,
) -> SccdStatus {
    guard(|| {
        let (spec, reg) = match scenario {
            SccdScenario::L2 => (SynthesisSpec::l2(nodes, dim, samples, seed), Regularizer::l2(lambda)),
            SccdScenario::L1 => (SynthesisSpec::l1(nodes, dim, samples, seed), Regularizer::l1(lambda, box_bound)),
        };
        let data = synthesize(&spec, reg).map_err(fail)?;
        let problem = Problem::from_dataset(&data).map_err(fail)?;
        unsafe { write_out(out, Box::into_raw(Box::new(SccdProblem(Arc::new(problem)))), "out") }
    })
}

/// Centralized optimum `obj*` of the pooled problem.
///
/// # Safety
/// `problem` must be a live handle; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sccd_problem_obj_star(problem: *const SccdProblem, out: *mut f64) -> SccdStatus {
    guard(|| {
        let p = unsafe { as_ref(problem, "problem") }?;
        let r = centralized_reference(&p.0).map_err(fail)?;
        unsafe { write_out(out, r.obj_star, "out") }
    })
}

/// # Safety
/// `problem` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sccd_problem_free(problem: *mut SccdProblem) {
    if !problem.is_null() {
        // SAFETY: produced by Box::into_raw in a constructor above.
        drop(unsafe { Box::from_raw(problem) });
    }
}

fn variant_of(v: SccdVariant) -> Variant {
    match v {
        SccdVariant::Dadmm => Variant::DAdmm,
        SccdVariant::Sccd => Variant::Sccd,
        SccdVariant::Dsccd => Variant::Dsccd,
    }
}

fn variant_to_c(v: Variant) -> SccdVariant {
    match v {
        Variant::DAdmm => SccdVariant::Dadmm,
        Variant::Sccd => SccdVariant::Sccd,
        Variant::Dsccd => SccdVariant::Dsccd,
    }
}

/// Library defaults for `variant` with penalty `c`.
#[no_mangle]
pub extern "C" fn sccd_config_default(variant: SccdVariant, c: f64) -> SccdConfig {
    let r = RunConfig::new(variant_of(variant), c);
    SccdConfig {
        variant: variant_to_c(r.variant),
        c: r.c,
        d_prox: r.d_prox,
        c_cmp: r.c_cmp,
        co_rat: r.co_rat,
        stepsize: r.stepsize,
        master_seed: r.master_seed,
        count_distinct: r.count_distinct as u8,
    }
}

/// Simulation of `problem` over `graph`; both handles may be freed
/// afterwards.
///
/// # Safety
/// All pointers must be live handles or valid structs; `out` valid for
/// writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn sccd_simulation_new(
    graph: *const SccdGraph,
    problem: *const SccdProblem,
    config: *const SccdConfig,
    out: *mut *mut SccdSimulation,
) -> SccdStatus {
    guard(|| {
        let g = unsafe { as_ref(graph, "graph") }?;
        let p = unsafe { as_ref(problem, "problem") }?;
        let c = unsafe { as_ref(config, "config") }?;
        let mut rc = RunConfig::new(variant_of(c.variant), c.c);
        rc.d_prox = c.d_prox;
        rc.c_cmp = c.c_cmp;
        rc.co_rat = c.co_rat;
        rc.stepsize = c.stepsize;
        rc.master_seed = c.master_seed;
        rc.count_distinct = c.count_distinct != 0;
        rc.validate().map_err(fail)?;
        let sim = Simulation::new(g.0.clone(), p.0.clone(), rc).map_err(fail)?;
        unsafe { write_out(out, Box::into_raw(Box::new(SccdSimulation(sim))), "out") }
    })
}

/// Advances every node by one synchronous round.
///
/// # Safety
/// `sim` must be a live handle; `info` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sccd_simulation_step(sim: *mut SccdSimulation, info: *mut SccdRoundInfo) -> SccdStatus {
    guard(|| {
        // SAFETY: caller guarantees a live, unaliased handle.
        let s = unsafe { sim.as_mut() }.ok_or_else(|| null("sim"))?;
        let rec = s.0.step().map_err(fail)?;
        if !info.is_null() {
            let transfers: usize = rec.transfers.iter().sum();
            let n = rec.transfers.len().max(1);
            let summary = SccdRoundInfo {
                round: rec.round,
                transfers,
                computations: rec.searches.iter().map(|s| s + 1).sum(),
                mean_num: transfers as f64 / n as f64,
                eta_warning: rec.eta_warning as u8,
            };
            unsafe { write_out(info, summary, "info") }?;
        }
        Ok(())
    })
}

/// Relative accuracy and consensus error of the current iterates.
///
/// # Safety
/// `sim` must be a live handle; `acc` and `cserr` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sccd_simulation_metrics(
    sim: *const SccdSimulation,
    obj_star: f64,
    acc: *mut f64,
    cserr: *mut f64,
) -> SccdStatus {
    guard(|| {
        let s = unsafe { as_ref(sim, "sim") }?;
        let xs: Vec<_> = s.0.states().iter().map(|st| st.x.view()).collect();
        let m = accounting::metrics(&xs, obj_star, s.0.problem()).map_err(fail)?;
        unsafe {
            write_out(acc, m.acc, "acc")?;
            write_out(cserr, m.cserr, "cserr")
        }
    })
}

/// Copies node `node`'s primal iterate into `buf` (length `len`, which
/// must equal the problem dimension).
///
/// # Safety
/// `sim` must be a live handle; `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn sccd_simulation_node_x(
    sim: *const SccdSimulation,
    node: usize,
    buf: *mut f64,
    len: usize,
) -> SccdStatus {
    guard(|| {
        let s = unsafe { as_ref(sim, "sim") }?;
        let states = s.0.states();
        let st = states.get(node).ok_or_else(|| {
            fail(Error::NodeOutOfRange {
                node,
                n: states.len(),
            })
        })?;
        if len != st.x.len() {
            return Err(fail(Error::DimensionMismatch {
                expected: st.x.len(),
                actual: len,
            }));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        // SAFETY: caller guarantees `len` writable values.
        let dst = unsafe { std::slice::from_raw_parts_mut(buf, len) };
        dst.iter_mut().zip(st.x.iter()).for_each(|(d, v)| *d = *v);
        Ok(())
    })
}

/// # Safety
/// `sim` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sccd_simulation_free(sim: *mut SccdSimulation) {
    if !sim.is_null() {
        // SAFETY: produced by Box::into_raw in sccd_simulation_new.
        drop(unsafe { Box::from_raw(sim) });
    }
}
