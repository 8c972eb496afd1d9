use thiserror::Error;

use crate::dynamics::DynamicsState;
use crate::model::TensionVector;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate geometry: cable {cable} has length {length:.3e} m")]
    DegenerateGeometry { cable: usize, length: f64 },

    #[error("no forward-kinematics solution: {0}")]
    NoSolution(String),

    #[error("QP did not converge within {iterations} iterations")]
    Nonconvergence {
        iterations: usize,
        best: TensionVector,
    },

    #[error("invalid QP: {0}")]
    InvalidProblem(String),

    #[error("simulation diverged at t = {:.6} s", .last_good.time)]
    Diverged { last_good: Box<DynamicsState> },

    #[error("tick {tick}: {source}")]
    AtTick {
        tick: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("runs are not comparable: {0}")]
    Incomparable(String),

    #[error("scenario: {0}")]
    Scenario(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn at_tick(self, tick: u64) -> Self {
        match self {
            e @ Error::AtTick { .. } => e,
            e => Error::AtTick {
                tick,
                source: Box::new(e),
            },
        }
    }
}
