use thiserror::Error;

/// Failure modes shared by every solver in the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("pole of the gamma function at {0}")]
    Pole(f64),
    #[error("argument outside the supported domain: {0}")]
    Domain(String),
    #[error("series or quadrature did not converge: {0}")]
    NonConvergence(String),
    #[error("parameters outside the {regime} regime: {detail}")]
    Regime { regime: &'static str, detail: String },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("no root: {0}")]
    NoRoot(String),
    #[error("independent root computations disagree: {0}")]
    RootMismatch(String),
    #[error("ill-conditioned collocation system (condition number {0:e})")]
    IllConditioned(f64),
    #[error("balayage residual {residual:e} exceeds tolerance {tol:e}")]
    BalayageResidual { residual: f64, tol: f64 },
    #[error("{0} sign changes exceed the configured maximum")]
    SignChanges(usize),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("no convergence after {0} iterations")]
    IterationLimit(usize),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
