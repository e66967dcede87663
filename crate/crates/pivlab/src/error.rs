//! Error type shared across the lab.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("wealth not computed for strategy '{strategy}'")]
    WealthNotComputed { strategy: String },

    #[error("utility domain violation on {count} path(s), first offenders: {first:?}")]
    UtilityDomain { count: usize, first: Vec<usize> },

    #[error("coefficient blow-up at (path {path}, step {step})")]
    CoefficientBlowUp { path: usize, step: usize },

    #[error("bounded regime violated at (path {path}, step {step}): |{which}| = {value} > {bound}")]
    BoundViolated { path: usize, step: usize, which: &'static str, value: f64, bound: f64 },

    #[error("Bessel start must be positive, got {0}")]
    BesselStart(f64),

    #[error("degenerate design at step {step}")]
    DegenerateDesign { step: usize },

    #[error("underdetermined regression: {n_paths} paths for basis of size {basis}")]
    Underdetermined { n_paths: usize, basis: usize },

    #[error("density kill: theta1 out of range at (path {path}, step {step}), value {value}")]
    DensityKill { path: usize, step: usize, value: f64 },

    #[error("ensemble mismatch: {0}")]
    EnsembleMismatch(String),

    #[error("missing layer strategy for level {level}")]
    MissingLayerStrategy { level: u32 },

    #[error("strategy '{strategy}' requires filter state, none provided")]
    MissingFilterState { strategy: String },

    #[error("jump ensemble requires a jump spec for compensator integrals")]
    MissingJumpSpec,

    #[error(transparent)]
    Expr(#[from] crate::expr::ParseError),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
