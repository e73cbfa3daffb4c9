use std::io;

use thiserror::Error;

/// Errors raised anywhere in the solver pipeline.
#[derive(Debug, Error)]
pub enum MsgfemError {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("coefficient bound violated: {0}")]
    CoefficientBound(String),
    #[error("coefficient grid mismatch: {0}")]
    GridMismatch(String),
    #[error("point ({0}, {1}) lies outside the unit square")]
    Domain(f64, f64),
    #[error("matrix is not symmetric positive definite (pivot {pivot} = {value:e})")]
    NotSpd { pivot: usize, value: f64 },
    #[error("solver did not converge: {0}")]
    NoConvergence(String),
    #[error("negative energy quadratic form {0:e}")]
    NegativeEnergy(f64),
    #[error("partition error: {0}")]
    Partition(String),
    #[error("cover configuration error: {0}")]
    CoverConfig(String),
    #[error("partition of unity error: {0}")]
    PartitionOfUnity(String),
    #[error("degenerate local domain: {0}")]
    DegenerateDomain(String),
    #[error("eigenpair request error: {0}")]
    Request(String),
    #[error("definiteness violation: {0}")]
    Definiteness(String),
    #[error("coarse assembly error: {0}")]
    Assembly(String),
    #[error("oracle size guard exceeded: {0}")]
    OracleSize(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl MsgfemError {
    /// True for errors caused by user input rather than numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            MsgfemError::InvalidMesh(_)
                | MsgfemError::GridMismatch(_)
                | MsgfemError::Partition(_)
                | MsgfemError::CoverConfig(_)
                | MsgfemError::Request(_)
                | MsgfemError::Config(_)
                | MsgfemError::Parse(_)
                | MsgfemError::Io(_)
                | MsgfemError::Domain(..)
        )
    }
}

pub type Result<T> = std::result::Result<T, MsgfemError>;
