//! k-server simulation toolkit.
//!
//! Generates Markov request streams, computes exact offline optima,
//! mines the optimum trace into a decision-tree policy, and benchmarks
//! that policy against Greedy, Balance and Harmonic online heuristics.

pub mod domain;
pub mod harness;
pub mod miner;
pub mod offline;
pub mod policies;
pub mod streamgen;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid node id {id} for node space of size {n}")]
    NodeOutOfRange { id: usize, n: usize },
    #[error("distance kind {kind} is incompatible with {space} space")]
    DistanceSpaceMismatch { kind: String, space: String },
    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),
    #[error("invalid decision: {0}")]
    InvalidDecision(String),
    #[error("matrix parse error: {0}")]
    MatrixParse(String),
    #[error("invalid transition matrix: {0}")]
    InvalidMatrix(String),
    #[error("invalid stream spec: {0}")]
    InvalidStreamSpec(String),
    #[error("infeasible instance: {0}")]
    Infeasible(String),
    #[error("trace error: {0}")]
    Trace(String),
    #[error("tree parse error at line {line}: {msg}")]
    TreeParse { line: usize, msg: String },
    #[error("case table error: {0}")]
    CaseTable(String),
    #[error("experiment spec error: {0}")]
    ExperimentSpec(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
