//! Composite minimizers for `smooth(x) + reg(x)`.
//!
//! Two methods are provided:
//!
//! * [`prox_gradient`]: proximal gradient with backtracking, optionally
//!   accelerated (FISTA momentum with gradient-based restart). With an
//!   identity prox this is plain gradient descent. Terminates on the
//!   gradient-mapping norm `||x - prox(x - t grad)|| / t`.
//! * [`fista_fixed`]: FISTA with a fixed step and `(l-1)/(l+2)` momentum,
//!   shrinkage followed by box clamping, terminated on
//!   `prg = ||z - x~|| / (rho sqrt(K))`.

use ndarray::{Array1, ArrayView1, Zip};

use crate::error::{Error, Result};
use crate::problem::Regularizer;

/// A differentiable function with a global Lipschitz bound on its gradient.
pub trait SmoothFn {
    fn dim(&self) -> usize;
    fn value(&self, x: ArrayView1<f64>) -> f64;
    fn gradient(&self, x: ArrayView1<f64>) -> Array1<f64>;
    /// Upper bound on the gradient's Lipschitz constant.
    fn lipschitz(&self) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientSettings {
    pub tolerance: f64,
    pub max_iters: usize,
    pub accelerate: bool,
}

impl GradientSettings {
    pub fn plain(tolerance: f64) -> Self {
        GradientSettings {
            tolerance,
            max_iters: 50_000,
            accelerate: false,
        }
    }

    pub fn accelerated(tolerance: f64) -> Self {
        GradientSettings {
            tolerance,
            max_iters: 200_000,
            accelerate: true,
        }
    }
}

/// How the FISTA shrinkage threshold is chosen.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum ThresholdRule {
    /// `lambda * rho`, the exact proximal step for `lambda ||x||_1`.
    Lambda,
    /// `beta * rho / nodes`.
    Scaled { beta: f64, nodes: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FistaSettings {
    /// Fixed inner step `rho`. Capped at `1 / L` of the smooth part.
    pub step: f64,
    pub prg_tolerance: f64,
    pub max_iters: usize,
    pub threshold: ThresholdRule,
}

impl Default for FistaSettings {
    fn default() -> Self {
        FistaSettings {
            step: 0.01,
            prg_tolerance: 1e-2,
            max_iters: 100_000,
            threshold: ThresholdRule::Lambda,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub x: Array1<f64>,
    pub iterations: usize,
    pub residual: f64,
}

fn norm(v: &Array1<f64>) -> f64 {
    v.dot(v).sqrt()
}

/// Minimizes `smooth + reg` starting from `x0`.
pub fn prox_gradient<S: SmoothFn + ?Sized>(
    smooth: &S,
    reg: &Regularizer,
    x0: ArrayView1<f64>,
    settings: &GradientSettings,
) -> Result<Solution> {
    let lipschitz = smooth.lipschitz().max(1e-12);
    let safe_step = 1.0 / lipschitz;
    let mut step = safe_step;
    let mut x = reg.project(x0);
    let mut y = x.clone();
    let mut momentum = 1.0_f64;
    let mut residual = f64::INFINITY;

    for iter in 1..=settings.max_iters {
        let fy = smooth.value(y.view());
        let gy = smooth.gradient(y.view());
        let (candidate, used_step) = loop {
            let trial = reg.prox((&y - &(&gy * step)).view(), step);
            if step <= safe_step {
                break (trial, step);
            }
            let d = &trial - &y;
            let model = fy + gy.dot(&d) + d.dot(&d) / (2.0 * step);
            let actual = smooth.value(trial.view());
            if actual <= model + 1e-14 * fy.abs().max(1.0) {
                break (trial, step);
            }
            step = (step * 0.5).max(safe_step);
        };
        residual = norm(&(&candidate - &y)) / used_step;
        if !residual.is_finite() {
            return Err(Error::NonFinite("proximal gradient iterate"));
        }

        if settings.accelerate {
            // gradient-based adaptive restart
            let restart = (&y - &candidate).dot(&(&candidate - &x)) > 0.0;
            if restart {
                momentum = 1.0;
                y = candidate.clone();
            } else {
                let next_momentum = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
                let beta = (momentum - 1.0) / next_momentum;
                y = &candidate + &((&candidate - &x) * beta);
                momentum = next_momentum;
            }
        } else {
            y = candidate.clone();
        }
        x = candidate;
        if residual <= settings.tolerance {
            return Ok(Solution {
                x,
                iterations: iter,
                residual,
            });
        }
        step *= 1.25;
    }
    Err(Error::SolverBudget {
        solver: if settings.accelerate {
            "accelerated proximal gradient"
        } else {
            "proximal gradient"
        },
        iterations: settings.max_iters,
        residual,
    })
}

/// FISTA with fixed step, shrinkage then clamping to the regularizer's box.
///
/// `x~(l) = clamp(S[z(l-1) - rho grad(z(l-1)), thr])`,
/// `z(l) = x~(l) + (l-1)/(l+2) (x~(l) - x~(l-1))`, stopping once
/// `||z(l-1) - x~(l)|| / (rho sqrt(K)) < tol` with `K` the dimension.
pub fn fista_fixed<S: SmoothFn + ?Sized>(
    smooth: &S,
    reg: &Regularizer,
    x0: ArrayView1<f64>,
    settings: &FistaSettings,
) -> Result<Solution> {
    let step = settings.step.min(1.0 / smooth.lipschitz().max(1e-12));
    let threshold = match settings.threshold {
        ThresholdRule::Lambda => reg.lambda * step,
        ThresholdRule::Scaled { beta, nodes } => beta * step / nodes.max(1) as f64,
    };
    let scale = step * (smooth.dim().max(1) as f64).sqrt();
    let mut prev = reg.project(x0);
    let mut z = prev.clone();
    let mut prg = f64::INFINITY;
    for l in 1..=settings.max_iters {
        let g = smooth.gradient(z.view());
        let mut next = &z - &(&g * step);
        next.mapv_inplace(|v| soft_threshold(v, threshold));
        let next = reg.project(next.view());
        prg = norm(&(&z - &next)) / scale;
        if !prg.is_finite() {
            return Err(Error::NonFinite("FISTA iterate"));
        }
        if prg < settings.prg_tolerance {
            return Ok(Solution {
                x: next,
                iterations: l,
                residual: prg,
            });
        }
        let lf = l as f64;
        let beta = (lf - 1.0) / (lf + 2.0);
        z = Zip::from(&next).and(&prev).map_collect(|&a, &b| a + beta * (a - b));
        prev = next;
    }
    Err(Error::SolverBudget {
        solver: "FISTA",
        iterations: settings.max_iters,
        residual: prg,
    })
}

/// `sign(v) * max(|v| - t, 0)`
pub fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}
