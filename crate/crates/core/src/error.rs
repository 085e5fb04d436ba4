use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("time {t} is outside the model domain [{lo}, {hi}]")]
    Domain { t: f64, lo: f64, hi: f64 },

    #[error("instantaneous gap closed at t = {t} (gap {gap:e})")]
    GapClosure { t: f64, gap: f64 },

    #[error(
        "step size too coarse: h*max|E| = {product:.4} (limit {limit}); use at least {required_steps} steps"
    )]
    Resolution {
        product: f64,
        limit: f64,
        required_steps: usize,
    },

    #[error("time grid is not uniform (deviation {deviation:e} at index {index})")]
    NonUniformGrid { index: usize, deviation: f64 },

    #[error("time {t} does not lie on the grid")]
    OffGrid { t: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("initial state has population {population} on the target eigenstate; the one-component solvers require 1")]
    NotInTargetState { population: f64 },

    #[error("config error at `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
