use thiserror::Error;

/// Errors produced by the bargaining library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("non-positive weight {weight} on edge ({u}, {v})")]
    NonPositiveWeight { u: usize, v: usize, weight: f64 },
    #[error("duplicate edge ({u}, {v})")]
    DuplicateEdge { u: usize, v: usize },
    #[error("self-loop at node {0}")]
    SelfLoop(usize),
    #[error("dangling node id {node} (instance has {nodes} nodes)")]
    DanglingNode { node: usize, nodes: usize },
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("invalid generator parameters: {0}")]
    InvalidGenerator(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("message vector has {got} entries, expected {expected}")]
    DomainMismatch { expected: usize, got: usize },
    #[error("instance size {n} exceeds the cap of {cap} nodes")]
    SizeCap { n: usize, cap: usize },
    #[error("degenerate LP: the optimum is not unique")]
    Degenerate,
    #[error("state is not a fixed point (residual {residual:e} > {tol:e})")]
    NotFixedPoint { residual: f64, tol: f64 },
    #[error("solution is not certified: {0}")]
    Uncertified(String),
    #[error("instance is not bipartite (odd cycle {0:?})")]
    NotBipartite(Vec<usize>),
    #[error("ambiguous slack clustering between {0} and {1}")]
    UnstableClustering(f64, f64),
    #[error("structure {0} is an alternating cycle; the NB solution is not unique")]
    NonUniqueCycle(usize),
    #[error("structure {0} is not a path")]
    NotAPath(usize),
    #[error("precondition infeasible: {0}")]
    Precondition(String),
    #[error("did not converge within {0} iterations")]
    NoConvergence(u64),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
