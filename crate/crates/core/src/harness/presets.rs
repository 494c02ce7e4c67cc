//! Built-in experiment specs for each figure and table dataset.

use crate::accounting::DelayMode;
use crate::adapt::SearchReturn;
use crate::engine::{InnerSettings, Variant};
use crate::harness::config::{DataSpec, DelaySpec, ExperimentSpec, GraphSpec, PenaltyRule, SPEC_VERSION};
use crate::problem::Scenario;

pub const MASTER_SEED: u64 = 20_240_601;

fn sccd_below(co_rat_max: f64, c: f64) -> PenaltyRule {
    PenaltyRule {
        variant: Some(Variant::Sccd),
        co_rat_min: None,
        co_rat_max: Some(co_rat_max),
        c,
    }
}

fn base(name: &str, scenario: Scenario) -> ExperimentSpec {
    ExperimentSpec {
        spec_version: SPEC_VERSION,
        name: name.into(),
        scenario,
        master_seed: MASTER_SEED,
        repetitions: 20,
        output: None,
        variants: vec![Variant::Sccd, Variant::DAdmm],
        co_rats: vec![0.1, 0.6, 1.2],
        stepsizes: vec![2],
        lambda: 0.4,
        d_prox: 0.3,
        c_cmp: 1.0,
        max_iters: 5000,
        acc_threshold: 0.1,
        cserr_threshold: 0.1,
        search_return: SearchReturn::Best,
        count_distinct: false,
        log_attempts: false,
        save_datasets: false,
        graph: GraphSpec {
            n: 30,
            p: 0.5,
            topology_file: None,
            seed: None,
        },
        data: DataSpec {
            dim: 100,
            samples: 20,
            pooled: false,
            box_bound: None,
            nonzeros: None,
            entries: None,
            noise_variance: None,
        },
        inner: InnerSettings::default(),
        delay: DelaySpec::default(),
        penalty: vec![
            sccd_below(1.0, 0.3),
            PenaltyRule::for_variant(Variant::Sccd, 0.2),
            PenaltyRule::any(0.3),
        ],
    }
}

/// Convergence of SCCD at co_rat 0.1, 0.6, 1.2 against D-ADMM, l2 scenario.
pub fn fig3() -> ExperimentSpec {
    base("fig3", Scenario::L2)
}

/// The l1 counterpart with box-constrained, FISTA-solved x-updates.
pub fn fig4() -> ExperimentSpec {
    let mut s = base("fig4", Scenario::L1);
    s.data.box_bound = Some(1.0);
    s.penalty = vec![
        sccd_below(1.0, 0.007),
        PenaltyRule::for_variant(Variant::Sccd, 0.005),
        PenaltyRule::any(0.006),
    ];
    s
}

/// Cost sweep over co_rat in [0, 2.4] for stepsizes 1, 2, 3.
pub fn fig5() -> ExperimentSpec {
    let mut s = base("fig5", Scenario::L2);
    s.co_rats = (0..=12).map(|i| (i as f64 * 0.2 * 10.0).round() / 10.0).collect();
    s.stepsizes = vec![1, 2, 3];
    s.repetitions = 100;
    s
}

/// One edge probability; the CLI runs this for p = 0.1, 0.5 and 0.9.
pub fn connectivity(p: f64) -> ExperimentSpec {
    let mut s = base(&format!("connectivity_p{p}"), Scenario::L2);
    s.graph.p = p;
    s.repetitions = 100;
    s
}

pub const CONNECTIVITY_PS: [f64; 3] = [0.1, 0.5, 0.9];

/// Network sizes and per-node sample counts sharing one global pool.
pub const TABLE1_SIZES: [(usize, usize); 4] = [(10, 60), (30, 20), (60, 10), (100, 6)];

/// One network size of the size sweep at co_rat 0.3.
pub fn table1(n: usize, samples: usize) -> ExperimentSpec {
    let mut s = base(&format!("table1_n{n}"), Scenario::L2);
    s.graph.n = n;
    s.data.samples = samples;
    s.data.pooled = true;
    s.co_rats = vec![0.3];
    s.repetitions = 50;
    s
}

/// Delay comparison on the fig3 network; costs are also charged in seconds.
pub fn delays() -> ExperimentSpec {
    let mut s = base("delays", Scenario::L2);
    s.co_rats = vec![0.1, 0.7, 1.4, 2.1];
    s.delay.mode = DelayMode::AbstractUnits;
    s
}

/// Every preset by name, with the multi-spec sweeps expanded.
pub fn all() -> Vec<(String, ExperimentSpec)> {
    let mut out = vec![
        ("fig3".to_string(), fig3()),
        ("fig4".to_string(), fig4()),
        ("fig5".to_string(), fig5()),
        ("delays".to_string(), delays()),
    ];
    for p in CONNECTIVITY_PS {
        let s = connectivity(p);
        out.push((s.name.clone(), s));
    }
    for (n, m) in TABLE1_SIZES {
        let s = table1(n, m);
        out.push((s.name.clone(), s));
    }
    out
}
