use thiserror::Error;

use crate::atlas::DelaySet;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("time {t} lies outside [-{r}, 0]")]
    Domain { t: f64, r: f64 },

    #[error("segments live on different grids")]
    GridMismatch,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("component {index} out of range 1..={max}")]
    IndexOutOfRange { index: usize, max: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("L(phi) = {w:?} lies outside the delay domain W")]
    OutsideW { w: Vec<f64> },

    #[error("hat(phi) = {v:?} lies outside the domain V of g")]
    OutsideV { v: Vec<f64> },

    #[error(
        "bump constraints have no solution on this grid (residual {residual:.3e}); refine the grid"
    )]
    InfeasibleRank { residual: f64 },

    #[error("only {available} candidate basis functions fit in ({z}, 0), need {needed}; refine the grid")]
    GridTooCoarse {
        z: f64,
        available: usize,
        needed: usize,
    },

    #[error("fixed-point solve did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("overlap iteration did not converge at t = {t} (change {change:.3e})")]
    OverlapNoConvergence { t: f64, change: f64 },

    #[error("coverage box is not contained in W^J for J = {j}: {reason}")]
    BoxNotInWJ { j: DelaySet, reason: String },

    #[error("w = {w:?} lies outside the frame coverage box")]
    OutsideBox { w: Vec<f64> },

    #[error("stratum {0} has no chart in this atlas")]
    NoChartForStratum(DelaySet),

    #[error("invalid stratum: {0}")]
    InvalidStratum(String),

    #[error("model registration failed: {0}")]
    Registration(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
