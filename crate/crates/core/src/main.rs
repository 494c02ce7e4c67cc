use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use sccd_core::accounting::tau_from_rate;
use sccd_core::harness::io::write_csv;
use sccd_core::harness::run::{mean_std, run_experiment, ExperimentOutcome};
use sccd_core::harness::{presets, verify, ExperimentSpec};
use sccd_core::{Error, Result};

#[derive(Parser)]
#[command(name = "sccd", version, about = "Decentralized consensus ADMM experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a TOML spec.
    Run(Common),
    /// Convergence and Num traces, l2 scenario.
    Fig3(Common),
    /// Convergence traces, l1 scenario.
    Fig4(Common),
    /// Cost sweep over co_rat and search stepsize.
    Fig5(Common),
    /// Cost and convergence for edge probabilities 0.1, 0.5 and 0.9.
    Connectivity(Common),
    /// Iterations to converge against network size.
    Table1(Common),
    /// Communication and computation delays under two link rates.
    Delays(Common),
    /// Property suites; exits non-zero if any check fails.
    Verify {
        #[arg(long, default_value_t = presets::MASTER_SEED)]
        seed: u64,
    },
}

#[derive(Args, Clone)]
struct Common {
    /// TOML spec; replaces the built-in preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Edge list to use instead of a generated graph.
    #[arg(long)]
    topology_file: Option<PathBuf>,
    #[arg(long)]
    repetitions: Option<usize>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

impl Common {
    fn spec(&self, preset: ExperimentSpec) -> Result<ExperimentSpec> {
        let mut spec = match &self.config {
            Some(path) => ExperimentSpec::read(path)?,
            None => preset,
        };
        if let Some(s) = self.seed {
            spec.master_seed = s;
        }
        if let Some(r) = self.repetitions {
            spec.repetitions = r;
        }
        if let Some(t) = &self.topology_file {
            spec.graph.topology_file = Some(t.clone());
        }
        spec.validate()?;
        Ok(spec)
    }

    fn out_dir(&self, spec: &ExperimentSpec) -> PathBuf {
        self.out
            .clone()
            .or_else(|| spec.output.clone())
            .unwrap_or_else(|| Path::new("results").join(&spec.name))
    }
}

fn report(outcome: &ExperimentOutcome) {
    for a in &outcome.aggregates {
        eprintln!(
            "{:>6} co_rat={:<4} step={} converged {}/{} iterations {:.1}±{:.1} total cost {:.1}",
            a.variant,
            a.co_rat,
            a.stepsize,
            a.converged,
            a.repetitions,
            a.iterations_mean,
            a.iterations_std,
            a.total_cost_mean
        );
    }
    eprintln!("wrote {}", outcome.out_dir.display());
}

fn single(common: &Common, preset: ExperimentSpec) -> Result<ExperimentOutcome> {
    let spec = common.spec(preset)?;
    let outcome = run_experiment(&spec, &common.out_dir(&spec))?;
    report(&outcome);
    Ok(outcome)
}

#[derive(Serialize)]
struct DelayRow {
    standard: &'static str,
    rate_bps: f64,
    tau: f64,
    variant: String,
    co_rat: f64,
    comm_delay_mean: f64,
    comp_delay_mean: f64,
    total_delay_mean: f64,
}

const LINK_RATES: [(&str, f64); 2] = [("802.11g", 54e6), ("802.11b", 11e6)];

fn delays(common: &Common) -> Result<()> {
    let outcome = single(common, presets::delays())?;
    let spec = &outcome.spec;
    let mut rows = Vec::new();
    for (standard, rate) in LINK_RATES {
        let tau = tau_from_rate(spec.data.dim, spec.delay.bits_per_value, rate);
        for cell in &outcome.cells {
            let runs: Vec<_> = outcome.runs.iter().filter(|r| r.cell == *cell).collect();
            let comm = mean_std(runs.iter().map(|r| tau * r.comm_delay_units)).0;
            let comp = mean_std(runs.iter().map(|r| r.delays.comp_delay)).0;
            rows.push(DelayRow {
                standard,
                rate_bps: rate,
                tau,
                variant: cell.variant.to_string(),
                co_rat: cell.co_rat,
                comm_delay_mean: comm,
                comp_delay_mean: comp,
                total_delay_mean: comm + comp,
            });
        }
    }
    write_csv(&outcome.out_dir.join("delays.csv"), &rows)
}

#[derive(Serialize)]
struct SweepRow {
    name: String,
    n: usize,
    p: f64,
    samples: usize,
    variant: String,
    co_rat: f64,
    stepsize: usize,
    repetitions: usize,
    converged: usize,
    iterations_mean: f64,
    iterations_std: f64,
    comm_total_mean: f64,
    comp_total_mean: f64,
    total_cost_mean: f64,
}

fn sweep(common: &Common, specs: Vec<ExperimentSpec>, file: &str, root_name: &str) -> Result<()> {
    if common.config.is_some() {
        return Err(Error::Config(format!("{root_name} runs a fixed sweep; use `run --config` for custom specs")));
    }
    let root = common.out.clone().unwrap_or_else(|| Path::new("results").join(root_name));
    let mut rows = Vec::new();
    for preset in specs {
        let spec = common.spec(preset)?;
        let outcome = run_experiment(&spec, &root.join(&spec.name))?;
        report(&outcome);
        for a in &outcome.aggregates {
            rows.push(SweepRow {
                name: spec.name.clone(),
                n: a.n,
                p: a.p,
                samples: spec.data.samples,
                variant: a.variant.clone(),
                co_rat: a.co_rat,
                stepsize: a.stepsize,
                repetitions: a.repetitions,
                converged: a.converged,
                iterations_mean: a.iterations_mean,
                iterations_std: a.iterations_std,
                comm_total_mean: a.comm_total_mean,
                comp_total_mean: a.comp_total_mean,
                total_cost_mean: a.total_cost_mean,
            });
        }
    }
    write_csv(&root.join(file), &rows)
}

fn configure_threads(common: &Common) -> Result<()> {
    if let Some(j) = common.jobs {
        if j == 0 {
            return Err(Error::Config("--jobs must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<bool> {
    let common = match &cli.command {
        Command::Verify { .. } => None,
        Command::Run(c)
        | Command::Fig3(c)
        | Command::Fig4(c)
        | Command::Fig5(c)
        | Command::Connectivity(c)
        | Command::Table1(c)
        | Command::Delays(c) => Some(c.clone()),
    };
    if let Some(c) = &common {
        configure_threads(c)?;
    }
    match cli.command {
        Command::Run(c) => {
            if c.config.is_none() {
                return Err(Error::Config("run needs --config".into()));
            }
            single(&c, presets::fig3())?;
        }
        Command::Fig3(c) => {
            single(&c, presets::fig3())?;
        }
        Command::Fig4(c) => {
            single(&c, presets::fig4())?;
        }
        Command::Fig5(c) => {
            single(&c, presets::fig5())?;
        }
        Command::Delays(c) => delays(&c)?,
        Command::Connectivity(c) => sweep(
            &c,
            presets::CONNECTIVITY_PS.iter().map(|&p| presets::connectivity(p)).collect(),
            "connectivity.csv",
            "connectivity",
        )?,
        Command::Table1(c) => sweep(
            &c,
            presets::TABLE1_SIZES.iter().map(|&(n, m)| presets::table1(n, m)).collect(),
            "table1.csv",
            "table1",
        )?,
        Command::Verify { seed } => {
            let checks = verify::run_all(seed);
            for c in &checks {
                println!("{c}");
            }
            return Ok(checks.iter().all(|c| c.passed));
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
