use thiserror::Error;

use crate::dynamics::EvolutionTrace;
use crate::fields::ComplexField;
use crate::groundstate::SolitonRecord;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("field contains non-finite values")]
    NonFinite,

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("frequency {omega} outside the admissible range (0, 3/16)")]
    OutOfRange { omega: f64 },

    #[error("shooting bracket not found for omega = {omega}: {detail}")]
    BracketFailure { omega: f64, detail: String },

    /// Bisection reached floating point resolution before the record met its
    /// tolerance. The best record found is attached and flagged.
    #[error("shooting stagnated at floating point resolution for omega = {}", .0.omega)]
    PrecisionLimit(Box<SolitonRecord>),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("profile not decayed within radius {radius}: value {value:e} exceeds threshold")]
    WrapAround { radius: f64, value: f64 },

    #[error("no sign change: {0}")]
    NotBracketed(String),

    #[error("curve minimum sits at the grid end omega = {omega}; widen the grid")]
    MinimumAtGridEnd { omega: f64 },

    #[error("insufficient grid: {0}")]
    InsufficientGrid(String),

    #[error("value {value} outside traced range [{lo}, {hi}]")]
    OutsideTracedRange { value: f64, lo: f64, hi: f64 },

    #[error("zero virial is infeasible at mass {mass}")]
    InfeasibleAtMass { mass: f64 },

    #[error("boundary mass fraction {fraction:e} exceeded threshold at t = {time}")]
    BoundaryContamination {
        time: f64,
        fraction: f64,
        trace: Box<EvolutionTrace>,
        field: Box<ComplexField>,
    },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
