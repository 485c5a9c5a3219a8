use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("Im z = 0 leaves the branch of m_sc ambiguous")]
    BranchAmbiguity,

    #[error("{what} did not converge (achieved tolerance {achieved:e})")]
    NonConvergence { what: &'static str, achieved: f64 },

    #[error("grid too coarse: Nyquist frequency {nyquist} below required {required}")]
    GridTooCoarse { nyquist: f64, required: f64 },

    #[error("point ({x}, {y}) lies outside the bulk window (-2+{delta}, 2-{delta})")]
    OutOfBulk { x: f64, y: f64, delta: f64 },

    #[error("base point too close to the spectral edge: kappa = {kappa} < {min}")]
    NearEdge { kappa: f64, min: f64 },

    #[error("degree {n} exceeds evaluator maximum {max}")]
    DegreeTooLarge { n: usize, max: usize },

    #[error(
        "particle collision at t = {time}: gap {gap:e} between indices {index} and {next} after {substeps} substeps"
    )]
    Collision { time: f64, index: usize, next: usize, gap: f64, substeps: usize },

    #[error("eigensolver failed: {0}")]
    Eigen(String),

    #[error("distribution: {0}")]
    Distribution(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
