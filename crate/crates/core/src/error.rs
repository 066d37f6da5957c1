use thiserror::Error;

/// Error type shared by all estimation and evaluation routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),

    #[error("nonstationary AR coefficient: |a1| = {magnitude} >= 1")]
    Nonstationary { magnitude: f64 },

    #[error("all particle weights degenerate at time step {t}")]
    DegenerateWeights { t: usize },

    #[error("singular denominator in M-step update for {group}")]
    SingularUpdate { group: String },

    #[error("degenerate test: {0}")]
    DegenerateTest(String),

    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
