use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("cutoff below spectral gap: cutoff {cutoff} < first nonzero eigenvalue {gap}")]
    CutoffBelowGap { cutoff: f64, gap: f64 },

    #[error("grid too large: {points} points exceeds the limit of {limit}")]
    GridTooLarge { points: usize, limit: usize },

    #[error("trace divergent: order {n} must exceed d/2 = {half_dim}")]
    TraceDivergent { n: u32, half_dim: f64 },

    #[error("amplitude divergent (dimension obstruction): order {n} must exceed d/2 = {half_dim}")]
    AmplitudeDivergent { n: u32, half_dim: f64 },

    #[error("insufficient cutoff for potential band: frequency {0:?} is not a difference of retained modes")]
    InsufficientBand(Vec<i64>),

    #[error("cutoff insufficient for requested epsilon {epsilon}: need cutoff >= {required:.6e}, have {available:.6e}")]
    CutoffTooSmall {
        epsilon: f64,
        required: f64,
        available: f64,
    },

    #[error("Hilbert-Schmidt norm of the Green operator diverges in dimension {0} at epsilon = 0")]
    HsDivergent(usize),

    #[error("series divergent; use product route (|z| * spectral radius = {0:.6})")]
    SeriesDivergent(f64),

    #[error("partition pole (lambda in the -1/sigma(V Delta^-1) set): factor 1 + lambda*mu = {factor:.3e} at mu = {mu:.6e}")]
    PartitionPole { mu: f64, factor: f64 },

    #[error("log-divergence not resolved; widen eps window or raise cutoff (residual {residual:.3e}, slope {slope:.3e})")]
    LogDivergenceUnresolved { residual: f64, slope: f64 },

    #[error("Gaussian integral divergent: 1 + lambda*mu = {0:.6e} is not positive")]
    GaussianDivergent(f64),

    #[error("ill-conditioned window [{t_min}, {t_max}]: {hint}")]
    IllConditionedWindow { t_min: f64, t_max: f64, hint: String },

    #[error("domain violation: {0}")]
    Domain(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) => 2,
            _ => 1,
        }
    }
}
