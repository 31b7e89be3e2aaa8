use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid perforation spec: {0}")]
    InvalidSpec(String),

    #[error("hole under-resolved: diameter spans {cells:.2} grid cells (need >= 4); use n >= {required_n}")]
    Unresolved { cells: f64, required_n: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("linear solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    Solver {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("nonlinear iteration stagnated at residual {residual:.3e} after {iterations} iterations")]
    Divergence {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("instability: {0}; try a larger lambda or a smaller forcing")]
    Instability(String),

    #[error("numerical quality: {0}")]
    NumericalQuality(String),

    #[error("exterior truncation too small: need R >= {required:.2} hole radii, have {available:.2}")]
    Truncation { required: f64, available: f64 },

    #[error("parameter outside the range of {estimate}: {detail}")]
    Range { estimate: String, detail: String },

    #[error("rate fit: {0}")]
    Fit(String),

    #[error("band limit violated: {0}")]
    BandLimit(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("sweep aborted, partial results written: {0}")]
    Sweep(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
