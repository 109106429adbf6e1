use thiserror::Error;

/// Errors produced by the design library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("POVM element {index} is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NonPsdElement { index: usize, min_eigenvalue: f64 },

    #[error("POVM elements do not sum to the identity (max deviation {deviation:e})")]
    NotResolutionOfIdentity { deviation: f64 },

    #[error("parameter out of model domain: {0}")]
    OutOfDomain(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    WrongDimension { expected: usize, found: usize },

    #[error("outcome {outcome} has vanishing probability but non-vanishing derivative")]
    SingularProbability { outcome: usize },

    #[error("state is rank deficient (min eigenvalue {min_eigenvalue:e})")]
    RankDeficientState { min_eigenvalue: f64 },

    #[error("direction is not a unit vector (norm {norm})")]
    NotUnitVector { norm: f64 },

    #[error("observable is proportional to the identity")]
    DegenerateObservable,

    #[error("direction vector lies outside the range of the information matrix")]
    Infeasible,

    #[error("information matrix is singular")]
    SingularInformation,

    #[error("unsupported number of parameters: {0}")]
    UnsupportedParamCount(usize),

    #[error("cannot apportion: {required} weights need a run each but only {available} available")]
    InfeasibleApportionment { required: usize, available: usize },

    #[error("no full-rank seed design found among the candidates")]
    SingularSeed,

    #[error("solver did not converge within {iterations} iterations (gap {gap:e})")]
    NoConvergence { iterations: usize, gap: f64 },

    #[error("criterion {0} is not supported here")]
    UnsupportedCriterion(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NonPsdElement { .. } => "NonPsdElement",
            Error::NotResolutionOfIdentity { .. } => "NotResolutionOfIdentity",
            Error::OutOfDomain(_) => "OutOfDomain",
            Error::WrongDimension { .. } => "WrongDimension",
            Error::SingularProbability { .. } => "SingularProbability",
            Error::RankDeficientState { .. } => "RankDeficientState",
            Error::NotUnitVector { .. } => "NotUnitVector",
            Error::DegenerateObservable => "DegenerateObservable",
            Error::Infeasible => "Infeasible",
            Error::SingularInformation => "SingularInformation",
            Error::UnsupportedParamCount(_) => "UnsupportedParamCount",
            Error::InfeasibleApportionment { .. } => "InfeasibleApportionment",
            Error::SingularSeed => "SingularSeed",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::UnsupportedCriterion(_) => "UnsupportedCriterion",
            Error::InvalidInput(_) => "InvalidInput",
            Error::Parse(_) => "Parse",
            Error::Json(_) => "Json",
            Error::Io(_) => "Io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
