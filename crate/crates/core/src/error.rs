use thiserror::Error;

use crate::pointset::Violation;

/// Errors produced by the registration library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CcpdError {
    #[error("invalid point set: {}", format_violations(.0))]
    InvalidPointSet(Vec<Violation>),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite position")]
    NonFinitePosition,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate posterior column {column}")]
    DegeneratePosterior { column: usize },

    #[error("M-step solve failed")]
    SolveFailed,

    #[error("posterior mass vanished")]
    PosteriorMassVanished,

    #[error("diverged at iteration {iteration}")]
    Diverged { iteration: usize },
}

impl CcpdError {
    /// True for failures of the numerical procedure itself, as opposed to
    /// bad inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            CcpdError::DegeneratePosterior { .. }
                | CcpdError::SolveFailed
                | CcpdError::PosteriorMassVanished
                | CcpdError::Diverged { .. }
        )
    }
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T, E = CcpdError> = std::result::Result<T, E>;
