use thiserror::Error;

use crate::emcore::EmState;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("geodesic left the domain at ({:.6}, {:.6}) after {} steps", .at[0], .at[1], .path.len().saturating_sub(1))]
    TrajectoryEscape { at: [f64; 2], path: Vec<[f64; 2]> },

    #[error("support violation: {0}")]
    Support(String),

    #[error("quadrature failed: {0}")]
    Integration(String),

    #[error("component {component} collapsed: {reason}")]
    ComponentCollapse {
        component: usize,
        reason: String,
        partial: Option<Box<EmState>>,
    },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("no convergence after {iterations} iterations: {reason}")]
    NotConverged { iterations: usize, reason: String },

    #[error("unsupported model: {0}")]
    Unsupported(String),

    #[error("linear solve failed: {0}")]
    SolveFailed(String),

    #[error("training diverged at step {step}")]
    Diverged { step: usize, trace: Vec<f64> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::Json(_) => 2,
            Error::Io(_) => 4,
            _ => 3,
        }
    }
}
