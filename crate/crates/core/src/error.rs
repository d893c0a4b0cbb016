use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid reaction network: {0}")]
    InvalidNetwork(String),

    #[error("no strictly positive conservation vector exists")]
    NoConservationVector,

    #[error("triangular structure violated: {0}")]
    StructureViolation(String),

    #[error("negative concentration {value} for species {species}")]
    DomainError { species: usize, value: f64 },

    #[error("eigenvalue {eigenvalue} at t={t}, x={x:?} outside declared interval [{lo}, {hi}]")]
    EllipticityViolation {
        t: f64,
        x: [f64; 2],
        eigenvalue: f64,
        lo: f64,
        hi: f64,
    },

    #[error("step from t={t} failed to restore nonnegativity after {halvings} halvings (last dt={dt})")]
    StepFailure { t: f64, dt: f64, halvings: usize },

    #[error("linear solve stagnated after {iterations} iterations (relative residual {residual:e})")]
    LinearSolveFailure { iterations: usize, residual: f64 },

    #[error("collapse bound violated at cell {cell}, snapshot {snapshot}: {detail}")]
    CollapseBoundViolation {
        snapshot: usize,
        cell: usize,
        detail: String,
    },

    #[error("dual solution {value} below zero at t = {t} with a nonnegative source")]
    ComparisonViolation { t: f64, value: f64 },

    #[error("unknown preset '{0}'")]
    UnknownPreset(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("expression error: {0}")]
    Expr(String),

    #[error("space-time norm for p={0} is not available (states not stored)")]
    NormUnavailable(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
