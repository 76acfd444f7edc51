use thiserror::Error;

/// Errors produced by the numerical modules.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is singular or too ill-conditioned (sigma_min/sigma_max = {ratio:e})")]
    SingularMatrix { ratio: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("exterior power order {k} out of range 1..={dim}")]
    BadOrder { k: usize, dim: usize },
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("convolution support {support} exceeds budget {budget}")]
    BudgetExceeded { support: u128, budget: usize },
    #[error("atom {atom} is not conformal (scalar times orthogonal): defect {defect:e}")]
    NotConformal { atom: usize, defect: f64 },
    #[error("not block conformal: {0}")]
    NotBlockConformal(String),
    #[error("invalid block decomposition: {0}")]
    InvalidDecomposition(String),
    #[error("Poisson equation is singular on orbit {orbit:?}: transition matrix is reducible")]
    SingularPoisson { orbit: Vec<usize> },
    #[error("exact occupancy oracle is inapplicable: {0}")]
    OracleInapplicable(String),
    #[error("empty sample")]
    EmptySample,
    #[error("decay fit needs at least 4 points, got {0}")]
    TooFewPoints(usize),
    #[error("decay fit requires positive values; point {index} has value {value}")]
    NonpositiveValue { index: usize, value: f64 },
    #[error("bad parameters: {0}")]
    BadParams(String),
    #[error("no closed-form reference spectrum for this measure")]
    NoReference,
}

pub type Result<T> = std::result::Result<T, Error>;
