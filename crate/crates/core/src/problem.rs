//! Local objectives, regularizers, synthetic logistic-regression datasets
//! and the centralized reference solve.

use ndarray::{Array1, Array2, ArrayView1, Axis, Zip};
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::solver::{self, FistaSettings, GradientSettings, SmoothFn, ThresholdRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegularizerKind {
    L1,
    L2,
}

/// `lambda * r(x)` with `r` the (non-squared) l1 or l2 norm. The l1 case
/// carries a box `[-a, a]^M` on every coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regularizer {
    pub kind: RegularizerKind,
    pub lambda: f64,
    pub box_bound: Option<f64>,
}

impl Regularizer {
    pub fn l2(lambda: f64) -> Self {
        Regularizer {
            kind: RegularizerKind::L2,
            lambda,
            box_bound: None,
        }
    }

    pub fn l1(lambda: f64, box_bound: f64) -> Self {
        Regularizer {
            kind: RegularizerKind::L1,
            lambda,
            box_bound: Some(box_bound),
        }
    }

    /// `lambda = 0` of the given kind (l1 keeps the default unit box).
    pub fn none(kind: RegularizerKind) -> Self {
        match kind {
            RegularizerKind::L2 => Self::l2(0.0),
            RegularizerKind::L1 => Self::l1(0.0, 1.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        match (self.kind, self.box_bound) {
            (RegularizerKind::L1, Some(a)) if a > 0.0 => Ok(()),
            (RegularizerKind::L1, _) => Err(Error::InvalidArgument("l1 regularizer needs a positive box bound".into())),
            (RegularizerKind::L2, None) => Ok(()),
            (RegularizerKind::L2, Some(_)) => Err(Error::InvalidArgument("box bound only applies to l1".into())),
        }
    }

    /// Same regularizer with `lambda` multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Regularizer {
            lambda: self.lambda * factor,
            ..*self
        }
    }

    pub fn value(&self, x: ArrayView1<f64>) -> f64 {
        match self.kind {
            RegularizerKind::L1 => self.lambda * x.iter().map(|v| v.abs()).sum::<f64>(),
            RegularizerKind::L2 => self.lambda * x.dot(&x).sqrt(),
        }
    }

    /// A subgradient: `lambda x / ||x||` (0 at the origin) for l2,
    /// `lambda sign(x)` (0 at zero coordinates) for l1.
    pub fn subgradient(&self, x: ArrayView1<f64>) -> Array1<f64> {
        match self.kind {
            RegularizerKind::L2 => {
                let n = x.dot(&x).sqrt();
                if n == 0.0 {
                    Array1::zeros(x.len())
                } else {
                    x.mapv(|v| self.lambda * v / n)
                }
            }
            RegularizerKind::L1 => x.mapv(|v| {
                if v == 0.0 {
                    0.0
                } else {
                    self.lambda * v.signum()
                }
            }),
        }
    }

    /// `argmin_u 0.5 ||u - x||^2 + step * lambda * r(u)` over the box.
    ///
    /// l1: elementwise soft-threshold at `step * lambda`, then clamp to
    /// `[-a, a]`. l2: block shrinkage `max(1 - step lambda / ||x||, 0) x`.
    pub fn prox(&self, x: ArrayView1<f64>, step: f64) -> Array1<f64> {
        let t = step * self.lambda;
        match self.kind {
            RegularizerKind::L1 => {
                let a = self.box_bound.unwrap_or(f64::INFINITY);
                x.mapv(|v| solver::soft_threshold(v, t).clamp(-a, a))
            }
            RegularizerKind::L2 => {
                let n = x.dot(&x).sqrt();
                if n <= t {
                    Array1::zeros(x.len())
                } else {
                    x.mapv(|v| v * (1.0 - t / n))
                }
            }
        }
    }

    /// Clamp onto the feasible box (identity for l2).
    pub fn project(&self, x: ArrayView1<f64>) -> Array1<f64> {
        match self.box_bound {
            Some(a) => x.mapv(|v| v.clamp(-a, a)),
            None => x.to_owned(),
        }
    }
}

/// `log(1 + e^t)`; for `t > 30` evaluated as `t + log1p(e^-t)`.
pub fn softplus(t: f64) -> f64 {
    if t > 30.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `sum_j log(1 + exp(a_j^T x)) - b_j a_j^T x` over one node's samples.
///
/// `features` holds one sample per row (`m x M`).
#[derive(Debug, Clone)]
pub struct LogisticLoss {
    features: Array2<f64>,
    labels: Array1<f64>,
    lipschitz: f64,
}

impl LogisticLoss {
    pub fn new(features: Array2<f64>, labels: Array1<f64>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.nrows(),
                actual: labels.len(),
            });
        }
        let lipschitz = 0.25 * spectral_norm_sq(&features);
        Ok(LogisticLoss {
            features,
            labels,
            lipschitz,
        })
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &Array1<f64> {
        &self.labels
    }

    fn check(&self, x: ArrayView1<f64>) -> Result<()> {
        if x.len() != self.features.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.features.ncols(),
                actual: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("logistic loss argument"));
        }
        Ok(())
    }

    /// Checked variant of [`SmoothFn::value`].
    pub fn try_value(&self, x: ArrayView1<f64>) -> Result<f64> {
        self.check(x)?;
        Ok(self.value(x))
    }

    /// Checked variant of [`SmoothFn::gradient`].
    pub fn try_gradient(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check(x)?;
        Ok(self.gradient(x))
    }
}

impl SmoothFn for LogisticLoss {
    fn dim(&self) -> usize {
        self.features.ncols()
    }

    fn value(&self, x: ArrayView1<f64>) -> f64 {
        let margins = self.features.dot(&x);
        // softplus(t) - b t == (1 - b) softplus(t) + b softplus(-t)
        Zip::from(&margins)
            .and(&self.labels)
            .fold(0.0, |acc, &t, &b| acc + (1.0 - b) * softplus(t) + b * softplus(-t))
    }

    fn gradient(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let mut residual = self.features.dot(&x);
        Zip::from(&mut residual)
            .and(&self.labels)
            .for_each(|t, &b| *t = sigmoid(*t) - b);
        self.features.t().dot(&residual)
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }
}

/// `weight * ||x - target||^2`
#[derive(Debug, Clone)]
pub struct QuadraticLoss {
    pub target: Array1<f64>,
    pub weight: f64,
}

impl SmoothFn for QuadraticLoss {
    fn dim(&self) -> usize {
        self.target.len()
    }

    fn value(&self, x: ArrayView1<f64>) -> f64 {
        let d = &x - &self.target;
        self.weight * d.dot(&d)
    }

    fn gradient(&self, x: ArrayView1<f64>) -> Array1<f64> {
        (&x - &self.target) * (2.0 * self.weight)
    }

    fn lipschitz(&self) -> f64 {
        2.0 * self.weight
    }
}

/// The smooth part `f_i` owned by one node.
#[derive(Debug, Clone)]
pub enum LocalObjective {
    Logistic(LogisticLoss),
    Quadratic(QuadraticLoss),
}

impl SmoothFn for LocalObjective {
    fn dim(&self) -> usize {
        match self {
            LocalObjective::Logistic(l) => l.dim(),
            LocalObjective::Quadratic(q) => q.dim(),
        }
    }

    fn value(&self, x: ArrayView1<f64>) -> f64 {
        match self {
            LocalObjective::Logistic(l) => l.value(x),
            LocalObjective::Quadratic(q) => q.value(x),
        }
    }

    fn gradient(&self, x: ArrayView1<f64>) -> Array1<f64> {
        match self {
            LocalObjective::Logistic(l) => l.gradient(x),
            LocalObjective::Quadratic(q) => q.gradient(x),
        }
    }

    fn lipschitz(&self) -> f64 {
        match self {
            LocalObjective::Logistic(l) => l.lipschitz(),
            LocalObjective::Quadratic(q) => q.lipschitz(),
        }
    }
}

/// Sum of all local objectives, i.e. the pooled smooth part.
pub struct Pooled<'a>(pub &'a [LocalObjective]);

impl SmoothFn for Pooled<'_> {
    fn dim(&self) -> usize {
        self.0.first().map_or(0, |l| l.dim())
    }

    fn value(&self, x: ArrayView1<f64>) -> f64 {
        self.0.iter().map(|l| l.value(x)).sum()
    }

    fn gradient(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let mut g = Array1::zeros(x.len());
        for l in self.0 {
            g += &l.gradient(x);
        }
        g
    }

    fn lipschitz(&self) -> f64 {
        self.0.iter().map(SmoothFn::lipschitz).sum()
    }
}

/// A distributed problem: one smooth term per node plus a shared
/// regularizer. Node `i` minimizes `phi_i = f_i + lambda r`.
#[derive(Debug, Clone)]
pub struct Problem {
    pub locals: Vec<LocalObjective>,
    pub regularizer: Regularizer,
}

impl Problem {
    pub fn new(locals: Vec<LocalObjective>, regularizer: Regularizer) -> Result<Self> {
        regularizer.validate()?;
        let dim = locals.first().map_or(0, |l| l.dim());
        if let Some(bad) = locals.iter().find(|l| l.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: bad.dim(),
            });
        }
        Ok(Problem { locals, regularizer })
    }

    pub fn from_dataset(data: &Dataset) -> Result<Self> {
        let locals = data
            .nodes
            .iter()
            .map(|n| LogisticLoss::new(n.features.clone(), n.labels.clone()).map(LocalObjective::Logistic))
            .collect::<Result<Vec<_>>>()?;
        Self::new(locals, data.regularizer)
    }

    pub fn node_count(&self) -> usize {
        self.locals.len()
    }

    pub fn dim(&self) -> usize {
        self.locals.first().map_or(0, |l| l.dim())
    }

    /// `phi_i(x) = f_i(x) + lambda r(x)`
    pub fn local_phi(&self, i: usize, x: ArrayView1<f64>) -> f64 {
        self.locals[i].value(x) + self.regularizer.value(x)
    }

    /// `sum_i f_i(x) + N lambda r(x)`
    pub fn global_objective(&self, x: ArrayView1<f64>) -> f64 {
        Pooled(&self.locals).value(x) + self.node_count() as f64 * self.regularizer.value(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    L2,
    L1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "dist")]
pub enum EntryDistribution {
    Gaussian { variance: f64 },
    Uniform { half_width: f64 },
}

/// Recipe for a synthetic logistic-regression instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthesisSpec {
    pub scenario: Scenario,
    pub nodes: usize,
    pub dim: usize,
    pub samples: usize,
    /// Nonzeros in every feature vector and in the true weight vector.
    pub nonzeros: usize,
    pub entries: EntryDistribution,
    pub noise_variance: f64,
    pub seed: u64,
}

impl SynthesisSpec {
    /// Dense-ish Gaussian instance: 50 nonzeros drawn from N(0, 5).
    pub fn l2(nodes: usize, dim: usize, samples: usize, seed: u64) -> Self {
        SynthesisSpec {
            scenario: Scenario::L2,
            nodes,
            dim,
            samples,
            nonzeros: 50.min(dim),
            entries: EntryDistribution::Gaussian { variance: 5.0 },
            noise_variance: 0.1,
            seed,
        }
    }

    /// Sparse instance: 10 nonzeros uniform on [-1, 1].
    pub fn l1(nodes: usize, dim: usize, samples: usize, seed: u64) -> Self {
        SynthesisSpec {
            scenario: Scenario::L1,
            nodes,
            dim,
            samples,
            nonzeros: 10.min(dim),
            entries: EntryDistribution::Uniform { half_width: 1.0 },
            noise_variance: 0.1,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeData {
    /// One sample per row, `m x M`.
    pub features: Array2<f64>,
    /// Labels in {0, 1}.
    pub labels: Array1<f64>,
    /// The noise draws used when labelling.
    pub noise: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x_true: Array1<f64>,
    pub nodes: Vec<NodeData>,
    pub regularizer: Regularizer,
}

impl Dataset {
    pub fn dim(&self) -> usize {
        self.x_true.len()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn samples_per_node(&self) -> usize {
        self.nodes.first().map_or(0, |n| n.labels.len())
    }

    /// Pools all samples in node order and splits them into `n` equal
    /// contiguous blocks.
    pub fn repartition(&self, n: usize) -> Result<Dataset> {
        let total: usize = self.nodes.iter().map(|d| d.labels.len()).sum();
        if n == 0 || !total.is_multiple_of(n) {
            return Err(Error::InvalidArgument(format!("{total} samples cannot be split over {n} nodes")));
        }
        let views: Vec<_> = self.nodes.iter().map(|d| d.features.view()).collect();
        let features = ndarray::concatenate(Axis(0), &views).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let labels: Array1<f64> = self.nodes.iter().flat_map(|d| d.labels.iter().copied()).collect();
        let noise: Array1<f64> = self.nodes.iter().flat_map(|d| d.noise.iter().copied()).collect();
        let per = total / n;
        let nodes = (0..n)
            .map(|i| {
                let r = i * per..(i + 1) * per;
                NodeData {
                    features: features.slice(ndarray::s![r.clone(), ..]).to_owned(),
                    labels: labels.slice(ndarray::s![r.clone()]).to_owned(),
                    noise: noise.slice(ndarray::s![r]).to_owned(),
                }
            })
            .collect();
        Ok(Dataset {
            x_true: self.x_true.clone(),
            nodes,
            regularizer: self.regularizer,
        })
    }
}

/// `sign(t)` mapped to labels: positive to 1, zero and negative to 0.
pub fn label_of(margin: f64) -> f64 {
    if margin > 0.0 {
        1.0
    } else {
        0.0
    }
}

fn sparse_vector<R: Rng>(rng: &mut R, dim: usize, nonzeros: usize, entries: &EntryDistribution) -> Array1<f64> {
    let mut v = Array1::zeros(dim);
    let mut support = index::sample(rng, dim, nonzeros).into_vec();
    support.sort_unstable();
    for pos in support {
        v[pos] = match *entries {
            EntryDistribution::Gaussian { variance } => {
                Normal::new(0.0, variance.sqrt()).expect("validated variance").sample(rng)
            }
            EntryDistribution::Uniform { half_width } => {
                Uniform::new_inclusive(-half_width, half_width).expect("validated width").sample(rng)
            }
        };
    }
    v
}

/// Draws a dataset: one true weight vector shared by all nodes, sparse
/// feature vectors, and labels `sign(a^T x_true + v)` mapped to {0, 1}.
pub fn synthesize(spec: &SynthesisSpec, regularizer: Regularizer) -> Result<Dataset> {
    regularizer.validate()?;
    let consistent = matches!(
        (spec.scenario, regularizer.kind),
        (Scenario::L2, RegularizerKind::L2) | (Scenario::L1, RegularizerKind::L1)
    );
    if !consistent {
        return Err(Error::InvalidArgument(format!(
            "scenario {:?} does not match regularizer {:?}",
            spec.scenario, regularizer.kind
        )));
    }
    if spec.nonzeros > spec.dim {
        return Err(Error::InvalidArgument(format!(
            "{} nonzeros exceed dimension {}",
            spec.nonzeros, spec.dim
        )));
    }
    if spec.nodes == 0 || spec.dim == 0 || spec.samples == 0 {
        return Err(Error::InvalidArgument("nodes, dim and samples must be positive".into()));
    }
    match spec.entries {
        EntryDistribution::Gaussian { variance } if !(variance >= 0.0) => {
            return Err(Error::InvalidArgument(format!("variance {variance}")))
        }
        EntryDistribution::Uniform { half_width } if !(half_width >= 0.0) => {
            return Err(Error::InvalidArgument(format!("half width {half_width}")))
        }
        _ => {}
    }
    if !(spec.noise_variance >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise variance {}", spec.noise_variance)));
    }

    let mut rng = seed::stream(&[seed::domain::DATASET, spec.seed]);
    let x_true = sparse_vector(&mut rng, spec.dim, spec.nonzeros, &spec.entries);
    let noise_dist = Normal::new(0.0, spec.noise_variance.sqrt()).expect("validated noise");
    let nodes = (0..spec.nodes)
        .map(|_| {
            let mut features = Array2::zeros((spec.samples, spec.dim));
            let mut labels = Array1::zeros(spec.samples);
            let mut noise = Array1::zeros(spec.samples);
            for j in 0..spec.samples {
                let a = sparse_vector(&mut rng, spec.dim, spec.nonzeros, &spec.entries);
                let v = noise_dist.sample(&mut rng);
                labels[j] = label_of(a.dot(&x_true) + v);
                noise[j] = v;
                features.row_mut(j).assign(&a);
            }
            NodeData {
                features,
                labels,
                noise,
            }
        })
        .collect();
    Ok(Dataset {
        x_true,
        nodes,
        regularizer,
    })
}

#[derive(Debug, Clone)]
pub struct Reference {
    pub x_star: Array1<f64>,
    pub obj_star: f64,
    pub iterations: usize,
    pub residual: f64,
}

/// Gradient-mapping tolerance of the l2 reference solve.
pub const REFERENCE_L2_TOL: f64 = 1e-8;
/// `prg` tolerance of the l1 reference solve.
pub const REFERENCE_L1_PRG: f64 = 1e-6;

/// Solves `min_x sum_i f_i(x) + N lambda r(x)` on the pooled data.
///
/// l2: accelerated proximal gradient with backtracking down to a gradient
/// mapping norm of 1e-8. l1: FISTA with step `min(0.01, 1/L)` down to
/// `prg < 1e-6`.
pub fn centralized_reference(problem: &Problem) -> Result<Reference> {
    let pooled = Pooled(&problem.locals);
    let reg = problem.regularizer.scaled(problem.node_count() as f64);
    let x0 = Array1::zeros(problem.dim());
    let sol = match reg.kind {
        RegularizerKind::L2 => solver::prox_gradient(&pooled, &reg, x0.view(), &GradientSettings::accelerated(REFERENCE_L2_TOL))?,
        RegularizerKind::L1 => solver::fista_fixed(
            &pooled,
            &reg,
            x0.view(),
            &FistaSettings {
                step: 0.01,
                prg_tolerance: REFERENCE_L1_PRG,
                max_iters: 2_000_000,
                threshold: ThresholdRule::Lambda,
            },
        )?,
    };
    let obj_star = problem.global_objective(sol.x.view());
    Ok(Reference {
        x_star: sol.x,
        obj_star,
        iterations: sol.iterations,
        residual: sol.residual,
    })
}

/// Largest squared singular value of `a`, by power iteration on `a^T a`.
fn spectral_norm_sq(a: &Array2<f64>) -> f64 {
    let cols = a.ncols();
    if cols == 0 || a.nrows() == 0 {
        return 0.0;
    }
    // Frobenius norm is a valid (loose) upper bound; the power estimate is
    // inflated slightly so it stays an upper bound after finite iterations.
    let frob = a.iter().map(|v| v * v).sum::<f64>();
    let mut v = Array1::from_elem(cols, 1.0 / (cols as f64).sqrt());
    v[0] += 0.5;
    let mut est = 0.0;
    for _ in 0..500 {
        let w = a.t().dot(&a.dot(&v));
        let n = w.dot(&w).sqrt();
        if n == 0.0 {
            return 0.0;
        }
        let next = v.dot(&w);
        v = w / n;
        if (next - est).abs() <= 1e-10 * next.abs() {
            est = next;
            break;
        }
        est = next;
    }
    (est * 1.01).min(frob)
}
