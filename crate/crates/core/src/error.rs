use thiserror::Error;

/// Errors raised across the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("operator is not Hermitian (max asymmetry {0:.3e})")]
    NotHermitian(f64),

    #[error("operator is not a density operator: {0}")]
    NotDensity(String),

    #[error("support violation in relative entropy: {0:.3e} of weight outside the second argument's support")]
    SupportViolation(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("missing statistics: {0}")]
    MissingStatistics(String),

    #[error("constraints are infeasible (minimum total violation {0:.3e})")]
    Infeasible(f64),

    #[error("linear program is infeasible for statistic {label}: {detail}")]
    LpInfeasible { label: String, detail: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("cascade contract violated: {0}")]
    Cascade(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
