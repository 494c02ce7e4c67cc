//! Undirected communication graphs: Erdős–Rényi generation, neighbor
//! queries, the Laplacian spectral radius, and the edge-list text format.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

use crate::error::{Error, Result};
use crate::seed;

/// Redraw budget for disconnected Erdős–Rényi samples.
pub const CONNECT_RETRIES: usize = 1000;

const DENSE_EIGEN_MAX_NODES: usize = 400;
const POWER_MAX_ITERS: usize = 10_000;
const POWER_TOL: f64 = 1e-10;

/// A simple undirected graph over dense node ids `0..n`.
///
/// Neighbor sets are kept sorted so that anything iterating over them (and
/// drawing random numbers along the way) is order-stable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    adjacency: Vec<Vec<usize>>,
    edge_count: usize,
    /// Number of rejected draws before this graph was accepted.
    retries: usize,
}

impl Graph {
    /// Builds a graph from an edge list. Duplicate edges collapse; self loops
    /// are rejected.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut sets = vec![BTreeSet::new(); n];
        for &(i, j) in edges {
            if i >= n {
                return Err(Error::NodeOutOfRange { node: i, n });
            }
            if j >= n {
                return Err(Error::NodeOutOfRange { node: j, n });
            }
            if i == j {
                return Err(Error::InvalidArgument(format!("self loop at node {i}")));
            }
            sets[i].insert(j);
            sets[j].insert(i);
        }
        let adjacency: Vec<Vec<usize>> = sets.into_iter().map(|s| s.into_iter().collect()).collect();
        let edge_count = adjacency.iter().map(Vec::len).sum::<usize>() / 2;
        Ok(Graph {
            n,
            adjacency,
            edge_count,
            retries: 0,
        })
    }

    pub fn complete(n: usize) -> Self {
        let edges: Vec<_> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        Self::from_edges(n, &edges).expect("complete graph edges are valid")
    }

    pub fn path(n: usize) -> Self {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Self::from_edges(n, &edges).expect("path edges are valid")
    }

    /// Star with node 0 at the center.
    pub fn star(n: usize) -> Self {
        let edges: Vec<_> = (1..n).map(|i| (0, i)).collect();
        Self::from_edges(n, &edges).expect("star edges are valid")
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn retries(&self) -> usize {
        self.retries
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Sorted neighbor ids of `i`.
    pub fn neighbors(&self, i: usize) -> Result<&[usize]> {
        self.adjacency
            .get(i)
            .map(Vec::as_slice)
            .ok_or(Error::NodeOutOfRange { node: i, n: self.n })
    }

    /// Edges as `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(i, nb)| nb.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
            .collect()
    }

    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return true;
        }
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &self.adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == self.n
    }

    /// y = (D - W) x
    pub fn laplacian_apply(&self, x: &[f64], y: &mut [f64]) {
        for (i, nb) in self.adjacency.iter().enumerate() {
            let mut acc = nb.len() as f64 * x[i];
            for &j in nb {
                acc -= x[j];
            }
            y[i] = acc;
        }
    }

    /// Dense row-major Laplacian `D - W`.
    pub fn laplacian_dense(&self) -> Vec<f64> {
        let n = self.n;
        let mut l = vec![0.0; n * n];
        for (i, nb) in self.adjacency.iter().enumerate() {
            l[i * n + i] = nb.len() as f64;
            for &j in nb {
                l[i * n + j] = -1.0;
            }
        }
        l
    }

    /// Serializes to the edge-list text format: a `n=<n>` header followed
    /// by one `i j` line per edge with `i < j`.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("n={}\n", self.n);
        for (i, j) in self.edges() {
            let _ = writeln!(out, "{i} {j}");
        }
        out
    }

    pub fn from_edge_list(text: &str) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            context: format!("edge list line {line}"),
            message,
        };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(no, l)| (no + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (no, header) = lines
            .next()
            .ok_or_else(|| parse_err(1, "missing n=<n> header".into()))?;
        let n: usize = header
            .strip_prefix("n=")
            .ok_or_else(|| parse_err(no, format!("expected n=<n>, got {header:?}")))?
            .trim()
            .parse()
            .map_err(|e| parse_err(no, format!("{e}")))?;
        let mut edges = Vec::new();
        for (no, line) in lines {
            let mut it = line.split_whitespace();
            let mut next = || -> Result<usize> {
                it.next()
                    .ok_or_else(|| parse_err(no, "expected two node ids".into()))?
                    .parse()
                    .map_err(|e| parse_err(no, format!("{e}")))
            };
            let (i, j) = (next()?, next()?);
            edges.push((i, j));
        }
        Self::from_edges(n, &edges)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_edge_list(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_edge_list()).map_err(|e| Error::io(path, e))
    }
}

/// Samples G(n, p) conditioned on connectivity by rejection.
///
/// Pairs `{i, j}` with `i < j` are visited in lexicographic order, each
/// consuming one uniform draw from a stream keyed by `seed`. Rejected draws
/// keep consuming the same stream.
pub fn generate_erdos_renyi(n: usize, p: f64, seed: u64) -> Result<Graph> {
    generate_erdos_renyi_with_budget(n, p, seed, CONNECT_RETRIES)
}

pub fn generate_erdos_renyi_with_budget(n: usize, p: f64, seed: u64, budget: usize) -> Result<Graph> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need n >= 2, got {n}")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("edge probability {p} outside [0, 1]")));
    }
    let mut rng = seed::stream(&[seed::domain::TOPOLOGY, seed]);
    for attempt in 0..budget.max(1) {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.random::<f64>() < p {
                    edges.push((i, j));
                }
            }
        }
        let mut g = Graph::from_edges(n, &edges)?;
        if g.is_connected() {
            g.retries = attempt;
            return Ok(g);
        }
    }
    Err(Error::GraphDisconnected {
        n,
        p,
        attempts: budget.max(1),
    })
}

/// Largest eigenvalue of the graph Laplacian `D - W`.
///
/// Dense symmetric eigensolve up to [`DENSE_EIGEN_MAX_NODES`] nodes. Larger
/// graphs use power iteration from a fixed pseudo-random start, which is
/// slow when the top two eigenvalues nearly coincide.
pub fn laplacian_lambda_max(g: &Graph) -> f64 {
    let n = g.node_count();
    if n == 0 || g.edge_count() == 0 {
        return 0.0;
    }
    if n <= DENSE_EIGEN_MAX_NODES {
        let dense = DMatrix::from_row_slice(n, n, &g.laplacian_dense());
        return SymmetricEigen::new(dense).eigenvalues.iter().copied().fold(0.0, f64::max);
    }
    power_iteration(g)
}

fn power_iteration(g: &Graph) -> f64 {
    let n = g.node_count();
    let mut v: Vec<f64> = (0..n)
        .map(|i| (seed::derive(&[i as u64]) >> 11) as f64 / (1u64 << 53) as f64 - 0.5)
        .collect();
    normalize(&mut v);
    let mut w = vec![0.0; n];
    let mut lambda = 0.0;
    for _ in 0..POWER_MAX_ITERS {
        g.laplacian_apply(&v, &mut w);
        lambda = dot(&v, &w);
        let residual = w
            .iter()
            .zip(&v)
            .map(|(wi, vi)| (wi - lambda * vi).powi(2))
            .sum::<f64>()
            .sqrt();
        if residual <= POWER_TOL * lambda.abs().max(1.0) {
            break;
        }
        let norm = normalize(&mut w);
        if norm == 0.0 {
            break;
        }
        std::mem::swap(&mut v, &mut w);
    }
    lambda
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = dot(v, v).sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}
