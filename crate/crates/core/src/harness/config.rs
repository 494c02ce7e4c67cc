//! TOML experiment specification.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::accounting::DelayMode;
use crate::adapt::SearchReturn;
use crate::engine::{InnerSettings, RunConfig, Variant};
use crate::error::{Error, Result};
use crate::problem::{EntryDistribution, Regularizer, Scenario, SynthesisSpec};

/// Schema version written to and required from every spec file.
pub const SPEC_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub spec_version: u32,
    pub name: String,
    pub scenario: Scenario,
    pub master_seed: u64,
    pub repetitions: usize,
    /// Output directory; the CLI's `--out` takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub variants: Vec<Variant>,
    pub co_rats: Vec<f64>,
    pub stepsizes: Vec<usize>,
    pub lambda: f64,
    pub d_prox: f64,
    #[serde(default = "one")]
    pub c_cmp: f64,
    pub max_iters: usize,
    pub acc_threshold: f64,
    pub cserr_threshold: f64,
    #[serde(default)]
    pub search_return: SearchReturn,
    #[serde(default)]
    pub count_distinct: bool,
    /// Write one attempts CSV (round, node, s, num, gamma, eval) per run.
    #[serde(default)]
    pub log_attempts: bool,
    /// Persist every synthesized dataset next to the obj* cache.
    #[serde(default)]
    pub save_datasets: bool,
    pub graph: GraphSpec,
    pub data: DataSpec,
    #[serde(default)]
    pub inner: InnerSettings,
    #[serde(default)]
    pub delay: DelaySpec,
    /// First matching rule gives `c` for a cell.
    pub penalty: Vec<PenaltyRule>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub n: usize,
    pub p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topology_file: Option<PathBuf>,
    /// Topology seed; derived from the master seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    /// Feature dimension `M`.
    pub dim: usize,
    /// Samples per node `m`.
    pub samples: usize,
    /// Draw `n * m` samples for a single node, then deal them out in
    /// contiguous blocks, so that every network size sees the same pool.
    #[serde(default)]
    pub pooled: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box_bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nonzeros: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entries: Option<EntryDistribution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_variance: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelaySpec {
    pub rate_bps: f64,
    pub bits_per_value: usize,
    pub seconds_per_unit: f64,
    pub mode: DelayMode,
}

impl Default for DelaySpec {
    fn default() -> Self {
        DelaySpec {
            rate_bps: 54e6,
            bits_per_value: 32,
            seconds_per_unit: 1e-3,
            mode: DelayMode::AbstractUnits,
        }
    }
}

/// `c` for cells matching `variant` (any when absent) and
/// `co_rat_min <= co_rat < co_rat_max` (unbounded when absent).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<Variant>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub co_rat_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub co_rat_max: Option<f64>,
    pub c: f64,
}

impl PenaltyRule {
    pub fn any(c: f64) -> Self {
        PenaltyRule {
            variant: None,
            co_rat_min: None,
            co_rat_max: None,
            c,
        }
    }

    pub fn for_variant(variant: Variant, c: f64) -> Self {
        PenaltyRule {
            variant: Some(variant),
            ..Self::any(c)
        }
    }

    pub fn matches(&self, variant: Variant, co_rat: f64) -> bool {
        self.variant.is_none_or(|v| v == variant)
            && self.co_rat_min.is_none_or(|lo| co_rat >= lo)
            && self.co_rat_max.is_none_or(|hi| co_rat < hi)
    }
}

/// One (variant, co_rat, stepsize) combination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub variant: Variant,
    pub co_rat: f64,
    pub stepsize: usize,
    pub c: f64,
}

impl Cell {
    /// File-name stem, e.g. `sccd_co0.6_step2`.
    pub fn label(&self) -> String {
        format!("{}_co{}_step{}", self.variant, self.co_rat, self.stepsize)
    }
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = toml::from_str(text).map_err(|e| Error::Parse {
            context: "experiment spec".into(),
            message: e.to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn penalty_for(&self, variant: Variant, co_rat: f64) -> Result<f64> {
        self.penalty
            .iter()
            .find(|r| r.matches(variant, co_rat))
            .map(|r| r.c)
            .ok_or_else(|| Error::Config(format!("no penalty rule covers {variant} at co_rat {co_rat}")))
    }

    /// Every cell in (variant, co_rat, stepsize) order. Only SCCD depends on
    /// the stepsize, so other variants get a single cell per co_rat.
    pub fn cells(&self) -> Result<Vec<Cell>> {
        let mut cells = Vec::new();
        for &variant in &self.variants {
            for &co_rat in &self.co_rats {
                let c = self.penalty_for(variant, co_rat)?;
                let steps: &[usize] = if variant == Variant::Sccd { &self.stepsizes } else { &self.stepsizes[..1] };
                for &stepsize in steps {
                    cells.push(Cell {
                        variant,
                        co_rat,
                        stepsize,
                        c,
                    });
                }
            }
        }
        Ok(cells)
    }

    pub fn regularizer(&self) -> Regularizer {
        match self.scenario {
            Scenario::L2 => Regularizer::l2(self.lambda),
            Scenario::L1 => Regularizer::l1(self.lambda, self.data.box_bound.unwrap_or(1.0)),
        }
    }

    /// Synthesis parameters for a repetition whose data seed is `seed`.
    pub fn synthesis(&self, seed: u64) -> SynthesisSpec {
        let (nodes, samples) = if self.data.pooled {
            (1, self.graph.n * self.data.samples)
        } else {
            (self.graph.n, self.data.samples)
        };
        let mut s = match self.scenario {
            Scenario::L2 => SynthesisSpec::l2(nodes, self.data.dim, samples, seed),
            Scenario::L1 => SynthesisSpec::l1(nodes, self.data.dim, samples, seed),
        };
        if let Some(k) = self.data.nonzeros {
            s.nonzeros = k;
        }
        if let Some(e) = self.data.entries {
            s.entries = e;
        }
        if let Some(v) = self.data.noise_variance {
            s.noise_variance = v;
        }
        s
    }

    pub fn run_config(&self, cell: &Cell, master_seed: u64) -> RunConfig {
        RunConfig {
            variant: cell.variant,
            c: cell.c,
            d_prox: self.d_prox,
            c_cmp: self.c_cmp,
            co_rat: cell.co_rat,
            stepsize: cell.stepsize,
            acc_threshold: self.acc_threshold,
            cserr_threshold: self.cserr_threshold,
            max_iters: self.max_iters,
            master_seed,
            count_distinct: self.count_distinct,
            search_return: self.search_return,
            inner: self.inner,
            measure_wallclock: self.delay.mode == DelayMode::MeasuredWallclock,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.spec_version != SPEC_VERSION {
            return fail(format!("spec_version {} is not supported (expected {SPEC_VERSION})", self.spec_version));
        }
        if self.repetitions == 0 {
            return fail("repetitions must be >= 1".into());
        }
        if self.variants.is_empty() || self.co_rats.is_empty() || self.stepsizes.is_empty() {
            return fail("variants, co_rats and stepsizes must be non-empty".into());
        }
        if self.co_rats.iter().any(|c| !(*c >= 0.0 && c.is_finite())) {
            return fail("co_rats must be finite and >= 0".into());
        }
        if self.graph.n < 2 || !(0.0..=1.0).contains(&self.graph.p) {
            return fail("graph needs n >= 2 and p in [0, 1]".into());
        }
        if self.data.dim == 0 || self.data.samples == 0 {
            return fail("data dimensions must be positive".into());
        }
        if self.penalty.iter().any(|r| !(r.c > 0.0 && r.c.is_finite())) {
            return fail("every penalty c must be > 0".into());
        }
        if !(self.delay.rate_bps > 0.0) || self.delay.bits_per_value == 0 || !(self.delay.seconds_per_unit >= 0.0) {
            return fail("delay model needs a positive rate and packet size".into());
        }
        self.regularizer().validate()?;
        for cell in self.cells()? {
            self.run_config(&cell, 0).validate()?;
        }
        Ok(())
    }
}
