//! Property suites behind the `verify` subcommand.
//!
//! Each check draws its instances from a seeded stream and reports the worst
//! observed violation next to its tolerance.

use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::adapt::{sampling_weights, variance_bound, WEIGHT_SUM_TOL};
use crate::engine::{p_update_full, p_update_sampled, CacheEntry, Selected};
use crate::problem::{label_of, LogisticLoss, Regularizer};
use crate::seed;
use crate::solver::SmoothFn;
use crate::topology::{generate_erdos_renyi, laplacian_lambda_max};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed violation (or error) in the check's own units.
    pub worst: f64,
    pub tolerance: f64,
    pub cases: usize,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: worst {:.3e} vs tolerance {:.1e} over {} cases",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.worst,
            self.tolerance,
            self.cases
        )
    }
}

fn check(name: &'static str, worst: f64, tolerance: f64, cases: usize) -> Check {
    Check {
        name,
        passed: worst <= tolerance,
        worst,
        tolerance,
        cases,
    }
}

fn rng(suite: u64, master: u64) -> ChaCha8Rng {
    seed::stream(&[seed::domain::VERIFY, master, suite])
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Array1<f64> {
    Array1::from_iter((0..n).map(|_| {
        let v: f64 = StandardNormal.sample(rng);
        scale * v
    }))
}

fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn max_abs_diff(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Expected single-draw sampled dual update equals the full update, by
/// enumerating every neighbor of nodes with one to five neighbors.
pub fn lemma1(master: u64) -> Check {
    let mut r = rng(1, master);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for degree in 1..=5 {
        for trial in 0..40 {
            let dim = 6;
            let x = gaussian(&mut r, dim, 1.0);
            let p = gaussian(&mut r, dim, 1.0);
            let xs: Vec<Array1<f64>> = (0..degree).map(|_| gaussian(&mut r, dim, 1.0)).collect();
            let c = r.random_range(0.05..2.0);
            // alternate between distance-proportional and arbitrary weights
            let w: Vec<f64> = if trial % 2 == 0 {
                let cache: Vec<CacheEntry> = xs
                    .iter()
                    .enumerate()
                    .map(|(j, v)| CacheEntry {
                        neighbor: j + 1,
                        x: v.clone(),
                        tag: 0,
                    })
                    .collect();
                sampling_weights(0, x.view(), &cache).expect("non-empty cache").weights
            } else {
                random_simplex(&mut r, degree)
            };
            let mut expected = Array1::<f64>::zeros(dim);
            for (j, xj) in xs.iter().enumerate() {
                let sel = [Selected {
                    node: j + 1,
                    x: xj.view(),
                    weight: w[j],
                }];
                let upd = p_update_sampled(0, p.view(), x.view(), &sel, c).expect("positive weight");
                expected.scaled_add(w[j], &upd);
            }
            let views: Vec<_> = xs.iter().map(|v| v.view()).collect();
            let full = p_update_full(p.view(), x.view(), &views, c);
            worst = worst.max(max_abs_diff(expected.view(), full.view()));
            cases += 1;
        }
    }
    check("lemma1 unbiased dual update", worst, 1e-12, cases)
}

fn weighted_sum(norms_sq: &[f64], w: &[f64]) -> f64 {
    norms_sq.iter().zip(w).map(|(d, w)| d / w).sum()
}

fn project_simplex(v: &[f64], floor: f64) -> Vec<f64> {
    // shift into the simplex {w >= floor, sum w = 1} by bisection on the offset
    let target = 1.0;
    let (mut lo, mut hi) = (-1e6, 1e6);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let s: f64 = v.iter().map(|x| (x - mid).max(floor)).sum();
        if s > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mid = 0.5 * (lo + hi);
    v.iter().map(|x| (x - mid).max(floor)).collect()
}

fn projected_gradient_minimizer(norms_sq: &[f64]) -> Vec<f64> {
    let k = norms_sq.len();
    let mut w = vec![1.0 / k as f64; k];
    let mut value = weighted_sum(norms_sq, &w);
    let mut step = 1e-3;
    for _ in 0..5000 {
        let grad: Vec<f64> = norms_sq.iter().zip(&w).map(|(d, w)| -d / (w * w)).collect();
        loop {
            let cand: Vec<f64> = w.iter().zip(&grad).map(|(w, g)| w - step * g).collect();
            let cand = project_simplex(&cand, 1e-12);
            let v = weighted_sum(norms_sq, &cand);
            if v <= value {
                w = cand;
                value = v;
                step *= 1.5;
                break;
            }
            step *= 0.5;
            if step < 1e-18 {
                return w;
            }
        }
    }
    w
}

/// Distance-proportional weights minimize `sum_j ||d_j||^2 / w_j` over the
/// simplex.
pub fn theorem3(master: u64) -> Check {
    let mut r = rng(2, master);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let k = r.random_range(2..=8);
        let norms_sq: Vec<f64> = (0..k)
            .map(|_| {
                let scale = r.random_range(0.1..3.0);
                let d = gaussian(&mut r, 5, scale);
                d.dot(&d)
            })
            .collect();
        let norms: Vec<f64> = norms_sq.iter().map(|v| v.sqrt()).collect();
        let total: f64 = norms.iter().sum();
        let w_star: Vec<f64> = norms.iter().map(|n| n / total).collect();
        let best = weighted_sum(&norms_sq, &w_star);
        let mut candidates: Vec<Vec<f64>> = (0..1000).map(|_| random_simplex(&mut r, k)).collect();
        candidates.push(projected_gradient_minimizer(&norms_sq));
        for v in &candidates {
            // a negative margin means a competitor beat the closed form
            worst = worst.max(best - weighted_sum(&norms_sq, v));
        }
    }
    check("theorem3 optimal sampling weights", worst, 1e-9, 100)
}

/// Variance of the `num`-draw estimator of `c sum_j d_j`, by enumerating
/// every ordered tuple of draws.
fn enumerated_variance(ds: &[Array1<f64>], w: &[f64], c: f64, num: usize) -> f64 {
    let k = ds.len();
    let dim = ds[0].len();
    let mut mean_target = Array1::<f64>::zeros(dim);
    for d in ds {
        mean_target.scaled_add(c, d);
    }
    let mut total = 0.0;
    let mut idx = vec![0usize; num];
    loop {
        let mut prob = 1.0;
        let mut est = Array1::<f64>::zeros(dim);
        for &j in &idx {
            prob *= w[j];
            est.scaled_add(c / (num as f64 * w[j]), &ds[j]);
        }
        let dev = &est - &mean_target;
        total += prob * dev.dot(&dev);
        let mut pos = 0;
        loop {
            if pos == num {
                return total;
            }
            idx[pos] += 1;
            if idx[pos] < k {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

/// The closed-form variance bound equals `(eta^2 / 2)` times the enumerated
/// single-draw variance under distance-proportional weights.
pub fn theorem4_identity(master: u64) -> Check {
    let mut r = rng(3, master);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let k = r.random_range(1..=5);
        let x = gaussian(&mut r, 4, 1.0);
        let xs: Vec<Array1<f64>> = (0..k).map(|_| gaussian(&mut r, 4, 1.0)).collect();
        let ds: Vec<Array1<f64>> = xs.iter().map(|xj| &x - xj).collect();
        let total: f64 = ds.iter().map(|d| d.dot(d).sqrt()).sum();
        let w: Vec<f64> = ds.iter().map(|d| d.dot(d).sqrt() / total).collect();
        let (c, eta) = (r.random_range(0.05..1.0), r.random_range(0.01..1.0));
        let views: Vec<_> = xs.iter().map(|v| v.view()).collect();
        let bound = variance_bound(x.view(), &views, c, eta);
        let v = enumerated_variance(&ds, &w, c, 1);
        worst = worst.max((bound - 0.5 * eta * eta * v).abs() / bound.max(1.0));
    }
    check("theorem4 closed-form variance", worst, 1e-12, 100)
}

/// Averaging `num` independent draws divides the variance by `num`.
pub fn variance_law(master: u64) -> Check {
    let mut r = rng(4, master);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for _ in 0..30 {
        let k = r.random_range(2..=4);
        let ds: Vec<Array1<f64>> = (0..k).map(|_| gaussian(&mut r, 3, 1.0)).collect();
        let w = random_simplex(&mut r, k);
        let v1 = enumerated_variance(&ds, &w, 0.5, 1);
        for num in 2..=3 {
            let vn = enumerated_variance(&ds, &w, 0.5, num);
            worst = worst.max((vn * num as f64 - v1).abs() / v1.max(1.0));
            cases += 1;
        }
    }
    check("variance scales as 1/num", worst, 1e-10, cases)
}

fn random_logistic(r: &mut ChaCha8Rng, samples: usize, dim: usize) -> LogisticLoss {
    let features = Array2::from_shape_fn((samples, dim), |_| {
        let v: f64 = StandardNormal.sample(r);
        v
    });
    let truth = gaussian(r, dim, 1.0);
    let labels = features.dot(&truth).mapv(label_of);
    LogisticLoss::new(features, labels).expect("matching shapes")
}

/// Analytic logistic gradients match central differences per coordinate.
pub fn gradient_fd(master: u64) -> Check {
    let mut r = rng(5, master);
    let mut worst: f64 = 0.0;
    let h = 1e-5;
    for _ in 0..20 {
        let loss = random_logistic(&mut r, 20, 10);
        let x = gaussian(&mut r, 10, 0.5);
        let g = loss.gradient(x.view());
        for j in 0..10 {
            let (mut up, mut dn) = (x.clone(), x.clone());
            up[j] += h;
            dn[j] -= h;
            let fd = (loss.value(up.view()) - loss.value(dn.view())) / (2.0 * h);
            worst = worst.max((fd - g[j]).abs());
        }
    }
    check("logistic gradient vs finite differences", worst, 1e-6, 200)
}

/// `||prox(a) - prox(b)|| <= ||a - b||` for both regularizers.
pub fn prox_nonexpansive(master: u64) -> Check {
    let mut r = rng(6, master);
    let mut worst: f64 = 0.0;
    let regs = [Regularizer::l1(0.4, 1.0), Regularizer::l2(0.4)];
    for _ in 0..500 {
        let step = r.random_range(1e-3..2.0);
        let a = gaussian(&mut r, 8, 2.0);
        let b = gaussian(&mut r, 8, 2.0);
        let gap = (&a - &b).dot(&(&a - &b)).sqrt();
        for reg in &regs {
            let pa = reg.prox(a.view(), step);
            let pb = reg.prox(b.view(), step);
            let moved = (&pa - &pb).dot(&(&pa - &pb)).sqrt();
            worst = worst.max(moved - gap);
        }
    }
    check("prox nonexpansive", worst.max(0.0), 1e-12, 1000)
}

/// Sampling weights sum to one, including the uniform fallback.
pub fn weight_normalization(master: u64) -> Check {
    let mut r = rng(7, master);
    let mut worst: f64 = 0.0;
    for t in 0..500 {
        let k = r.random_range(1..=30);
        let x = gaussian(&mut r, 5, 1.0);
        let cache: Vec<CacheEntry> = (0..k)
            .map(|j| {
                let scale = 10f64.powi(r.random_range(-6..6));
                CacheEntry {
                    neighbor: j + 1,
                    x: if t % 10 == 0 { x.clone() } else { gaussian(&mut r, 5, scale) },
                    tag: 0,
                }
            })
            .collect();
        let w = sampling_weights(0, x.view(), &cache).expect("non-empty cache");
        worst = worst.max((w.weights.iter().sum::<f64>() - 1.0).abs());
    }
    check("sampling weights sum to one", worst, WEIGHT_SUM_TOL, 500)
}

/// Power-iteration `lambda_max` against a dense symmetric eigensolver.
pub fn lambda_max_oracle(master: u64) -> Check {
    let mut r = rng(8, master);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for _ in 0..20 {
        let n = r.random_range(5..=60);
        let p = r.random_range(0.2..0.9);
        let Ok(g) = generate_erdos_renyi(n, p, r.random()) else {
            continue;
        };
        let dense = DMatrix::from_row_slice(n, n, &g.laplacian_dense());
        let oracle = SymmetricEigen::new(dense).eigenvalues.iter().copied().fold(f64::MIN, f64::max);
        worst = worst.max((laplacian_lambda_max(&g) - oracle).abs() / oracle.max(1.0));
        cases += 1;
    }
    check("laplacian lambda_max vs dense eigensolver", worst, 1e-6, cases)
}

/// Every suite, in a fixed order.
pub fn run_all(master: u64) -> Vec<Check> {
    vec![
        lemma1(master),
        theorem3(master),
        theorem4_identity(master),
        variance_law(master),
        gradient_fd(master),
        prox_nonexpansive(master),
        weight_normalization(master),
        lambda_max_oracle(master),
    ]
}
