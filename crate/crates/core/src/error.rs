use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{family} is undefined at ({x1}, {x2})")]
    Domain {
        family: &'static str,
        x1: f64,
        x2: f64,
    },

    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A realization-driven run needed a point outside the generated window.
    #[error("window exhausted at column {column}: {what}")]
    WindowExceeded { column: u64, what: &'static str },

    #[error("exact tie between ({lower}, {upper}) at column {column}; continuous model draws must not tie")]
    SemiLatticeTie { column: u64, lower: f64, upper: f64 },

    #[error("diffusion coefficient {sigma} at t = {t} is not positive and finite")]
    NonPositiveDiffusion { t: f64, sigma: f64 },

    #[error("time change value {0} is outside the range of the time change")]
    TimeChangeRange(f64),

    #[error("empty sample in evaluation range [{lo}, {hi}]")]
    EmptySample { lo: f64, hi: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("failed to parse {path}: {source}")]
    ConfigParse {
        path: PathBuf,
        source: toml::de::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    ThreadPool(#[from] rayon::ThreadPoolBuildError),
}
