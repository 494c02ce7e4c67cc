//! CSV schemas, the dataset container and the obj* cache.
//!
//! # Dataset container
//!
//! All integers and floats are little-endian; floats are IEEE-754 binary64.
//!
//! | field        | type          | notes                                   |
//! |--------------|---------------|-----------------------------------------|
//! | magic        | 8 bytes       | `SCCDDATA`                              |
//! | version      | u32           | currently 1                             |
//! | kind         | u32           | 1 = l1, 2 = l2                          |
//! | lambda       | f64           |                                         |
//! | box_bound    | f64           | NaN when absent                         |
//! | nodes        | u64           | `N`                                     |
//! | dim          | u64           | `M`                                     |
//! | samples      | u64           | `m`, per node                           |
//! | x_true       | `M` x f64     |                                         |
//! | per node     |               | repeated `N` times:                     |
//! | - features   | `m*M` x f64   | row-major, one sample per row           |
//! | - labels     | `m` x f64     | 0 or 1                                  |
//! | - noise      | `m` x f64     | label noise draws                       |

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::problem::{Dataset, NodeData, Regularizer, RegularizerKind};

pub const DATASET_MAGIC: &[u8; 8] = b"SCCDDATA";
pub const DATASET_VERSION: u32 = 1;

/// One row of a per-run trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub round: usize,
    pub acc: f64,
    pub cserr: f64,
    pub mean_num: f64,
    pub comm_cost_round: f64,
    pub comp_cost_round: f64,
    pub comm_cum: f64,
    pub comp_cum: f64,
    pub eta_warning: bool,
}

/// One row of `summary.csv`, one per (cell, repetition).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub variant: String,
    pub co_rat: f64,
    pub stepsize: usize,
    pub n: usize,
    pub p: f64,
    pub iterations: usize,
    pub comm_total: f64,
    pub comp_total: f64,
    pub total_cost: f64,
    pub comm_delay: f64,
    pub comp_delay: f64,
    pub total_delay: f64,
    pub seed: u64,
}

/// Per-run status that does not fit the summary schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusRow {
    pub variant: String,
    pub co_rat: f64,
    pub stepsize: usize,
    pub repetition: usize,
    pub seed: u64,
    pub c: f64,
    pub converged: bool,
    pub final_mean_num: f64,
    pub obj_star: f64,
    pub error: String,
}

/// Mean and standard deviation across repetitions of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub scenario: String,
    pub variant: String,
    pub co_rat: f64,
    pub stepsize: usize,
    pub n: usize,
    pub p: f64,
    pub repetitions: usize,
    pub converged: usize,
    pub failed: usize,
    pub iterations_mean: f64,
    pub iterations_std: f64,
    pub comm_total_mean: f64,
    pub comm_total_std: f64,
    pub comp_total_mean: f64,
    pub comp_total_std: f64,
    pub total_cost_mean: f64,
    pub total_cost_std: f64,
    pub comm_delay_mean: f64,
    pub comp_delay_mean: f64,
    pub total_delay_mean: f64,
}

/// Round-wise means across the repetitions still running at that round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub round: usize,
    pub runs: usize,
    pub acc: f64,
    pub cserr: f64,
    pub mean_num: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRow {
    pub round: usize,
    pub node: usize,
    pub s: usize,
    pub num: usize,
    pub gamma: f64,
    pub eval: f64,
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s<'a>(out: &mut Vec<u8>, vs: impl IntoIterator<Item = &'a f64>) {
    for v in vs {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_dataset(d: &Dataset) -> Vec<u8> {
    let (dim, samples) = (d.dim(), d.samples_per_node());
    let mut out = Vec::with_capacity(64 + 8 * (dim + d.node_count() * samples * (dim + 2)));
    out.extend_from_slice(DATASET_MAGIC);
    put_u32(&mut out, DATASET_VERSION);
    put_u32(
        &mut out,
        match d.regularizer.kind {
            RegularizerKind::L1 => 1,
            RegularizerKind::L2 => 2,
        },
    );
    put_f64s(&mut out, &[d.regularizer.lambda, d.regularizer.box_bound.unwrap_or(f64::NAN)]);
    put_u64(&mut out, d.node_count() as u64);
    put_u64(&mut out, dim as u64);
    put_u64(&mut out, samples as u64);
    put_f64s(&mut out, d.x_true.iter());
    for node in &d.nodes {
        // iter() walks in logical (row-major) order regardless of layout
        put_f64s(&mut out, node.features.iter());
        put_f64s(&mut out, node.labels.iter());
        put_f64s(&mut out, node.noise.iter());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| Error::Parse {
            context: "dataset".into(),
            message: format!("truncated at byte {}", self.at),
        })?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| Error::Parse {
            context: "dataset".into(),
            message: format!("size {v} does not fit in memory"),
        })
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Parse {
            context: "dataset".into(),
            message: "size overflow".into(),
        })?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    let bad = |m: String| Error::Parse {
        context: "dataset".into(),
        message: m,
    };
    let mut r = Reader { bytes, at: 0 };
    if r.take(8)? != DATASET_MAGIC {
        return Err(bad("bad magic".into()));
    }
    let version = r.u32()?;
    if version != DATASET_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let kind = r.u32()?;
    let head = r.f64s(2)?;
    let regularizer = match kind {
        1 => Regularizer::l1(head[0], head[1]),
        2 => Regularizer::l2(head[0]),
        k => return Err(bad(format!("unknown regularizer kind {k}"))),
    };
    regularizer.validate()?;
    let (nodes, dim, samples) = (r.u64()?, r.u64()?, r.u64()?);
    let x_true = Array1::from(r.f64s(dim)?);
    let mut data = Vec::with_capacity(nodes);
    for _ in 0..nodes {
        let features = Array2::from_shape_vec((samples, dim), r.f64s(samples * dim)?).map_err(|e| bad(e.to_string()))?;
        let labels = Array1::from(r.f64s(samples)?);
        let noise = Array1::from(r.f64s(samples)?);
        data.push(NodeData { features, labels, noise });
    }
    if r.at != bytes.len() {
        return Err(bad(format!("{} trailing bytes", bytes.len() - r.at)));
    }
    Ok(Dataset {
        x_true,
        nodes: data,
        regularizer,
    })
}

pub fn write_dataset(path: &Path, d: &Dataset) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, encode_dataset(d)).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    decode_dataset(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// Hex SHA-256 of the encoded dataset.
pub fn dataset_hash(d: &Dataset) -> String {
    Sha256::digest(encode_dataset(d)).iter().map(|b| format!("{b:02x}")).collect()
}

/// Looks up obj* for `hash` under `dir`, computing and storing it on a miss.
pub fn cached_obj_star(dir: &Path, hash: &str, compute: impl FnOnce() -> Result<f64>) -> Result<f64> {
    let path = dir.join(format!("objstar-{hash}.txt"));
    if let Ok(text) = fs::read_to_string(&path) {
        let parsed = text
            .lines()
            .find_map(|l| l.strip_prefix("obj_star="))
            .and_then(|v| v.trim().parse::<f64>().ok());
        if let Some(v) = parsed {
            return Ok(v);
        }
    }
    let value = compute()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    // {:?} prints the shortest representation that round-trips exactly
    fs::write(&path, format!("sha256={hash}\nobj_star={value:?}\n")).map_err(|e| Error::io(&path, e))?;
    Ok(value)
}
