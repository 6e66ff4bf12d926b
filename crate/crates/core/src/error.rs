use thiserror::Error;

use crate::geom::Point;

/// Errors raised by the library.
///
/// `Refused` marks a failed precondition of a construction (the CLI maps it to exit code 2);
/// everything else is a genuine error.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unknown catalog field `{0}`")]
    UnknownField(String),

    #[error("|t| = {t} exceeds the configured horizon {horizon}")]
    HorizonExceeded { t: f64, horizon: f64 },

    #[error("escaped-domain: trajectory left the plane patch at t = {time} near {point:?}")]
    EscapedDomain { time: f64, point: Point },

    #[error("near singularity: field magnitude {speed:e} at {point:?}")]
    NearSingularity { point: Point, speed: f64 },

    #[error("non-monotone reparametrization: {0}")]
    NonMonotone(String),

    #[error("empty search grid")]
    EmptySearch,

    #[error("DP lattice of {cells} cells exceeds the cell budget {budget}")]
    BudgetExceeded { cells: u64, budget: u64 },

    #[error("left K~: {0}")]
    LeftTrapSet(String),

    #[error("degenerate field: {0}")]
    DegenerateField(String),

    #[error("cannot separate critical elements: {0}")]
    Inseparable(String),

    #[error("inconclusive: {0}")]
    Inconclusive(String),

    #[error("unresolved sector: {0}")]
    UnresolvedSector(String),

    #[error("not a transit sector: {0}")]
    NotTransit(String),

    #[error("transversal failure: {0}")]
    Transversal(String),

    #[error("refused: {0}")]
    Refused(String),
}

impl Error {
    /// True when the error reports an unmet precondition rather than a malfunction.
    pub fn is_refusal(&self) -> bool {
        matches!(self, Error::Refused(_) | Error::LeftTrapSet(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
