use thiserror::Error;

use crate::policy::FeasibilityReport;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("arm index {arm} out of range for {arms} arms")]
    ArmOutOfRange { arm: usize, arms: usize },

    #[error("arm {0} has not been pulled yet")]
    UnexploredArm(usize),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error(
        "instance admits no fair policy (sum condition: {}, max condition: {})",
        .0.cond_sum,
        .0.cond_max
    )]
    InfeasibleInstance(Box<FeasibilityReport>),

    #[error("sufficient feasibility conditions not met")]
    SufficientConditionsNotMet,

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Process exit code: 2 for infeasibility, 3 for numerical failures,
    /// 4 for I/O, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Infeasible(_)
            | Self::InfeasibleInstance(_)
            | Self::SufficientConditionsNotMet => 2,
            Self::NumericalFailure(_) => 3,
            Self::Io(_) => 4,
            _ => 1,
        }
    }
}
