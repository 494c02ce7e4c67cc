//! Decentralized consensus ADMM with adaptive, importance-sampled neighbor
//! communication.
//!
//! The crate simulates three synchronous variants over an undirected graph:
//! the classical full-exchange update ([`engine::Variant::DAdmm`]), the
//! sampled linearized-proximal update with a per-node search over the number
//! of neighbors to contact ([`engine::Variant::Sccd`]), and its deterministic
//! full-neighbor counterpart ([`engine::Variant::Dsccd`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)] // negated comparisons reject NaN

pub mod accounting;
pub mod adapt;
pub mod engine;
pub mod error;
pub mod harness;
pub mod problem;
pub mod seed;
pub mod solver;
pub mod topology;

pub use error::{Error, Result};
