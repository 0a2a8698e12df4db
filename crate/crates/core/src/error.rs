use thiserror::Error;

use crate::phase_solver::IterationRecord;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("length mismatch: expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("norm exponent must be >= 1, got {0}")]
    InvalidExponent(f64),

    #[error("time step must be positive, got {0}")]
    InvalidTimeStep(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    LinearSolver { iterations: usize, residual: f64 },

    #[error("nonlinearity overflowed at z = {z} (t = {t})")]
    Overflow { z: f64, t: f64 },

    #[error("explicit step {step} rejected: |F| reached {value:e}")]
    BlowUp { step: usize, value: f64 },

    #[error("fixed-point iteration did not converge at lambda = {lambda} after {iterations} iterations (residual {residual:e})")]
    NonConvergence { lambda: f64, iterations: usize, residual: f64, history: Box<Vec<IterationRecord>> },

    #[error("damping factor underflowed ({omega:e}) at lambda = {lambda}")]
    DampingUnderflow { lambda: f64, omega: f64, history: Box<Vec<IterationRecord>> },

    #[error("inner phase solve failed at outer lambda = {lambda}: {source}")]
    Inner {
        lambda: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("data is not spatially constant: {0}")]
    NotConstant(String),

    #[error("snapshot parse error: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
