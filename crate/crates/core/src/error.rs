use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A design matrix (or one of its leading column blocks) is not of full
    /// column rank. `column` is the zero-based index of the first pivot that
    /// fell under the tolerance.
    #[error("matrix is rank deficient at column {column} (|r_kk| = {pivot:e} < tolerance {tolerance:e})")]
    RankDeficient {
        column: usize,
        pivot: f64,
        tolerance: f64,
    },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("bad shape: {0}")]
    BadShape(String),

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("order {order} exceeds the number of data points {rows}")]
    OrderExceedsData { order: usize, rows: usize },

    #[error("order {order} exceeds the kernel's maximum order {max_order}")]
    OrderExceedsKernel { order: usize, max_order: usize },

    #[error("noise variance must be positive, got {0}")]
    NonpositiveVariance(f64),

    #[error("epsilon must be positive, got {0}")]
    NonpositiveEpsilon(f64),

    /// Noise-variance validation needs `n - m > 2 alpha^2`, otherwise the
    /// upper end of the interval is unbounded.
    #[error(
        "insufficient samples: n - m = {} must exceed 2*alpha^2 = {:.4} (need n > {})",
        .n - .m, 2.0 * .alpha * .alpha, .minimal_n - 1
    )]
    InsufficientSamples {
        n: usize,
        m: usize,
        alpha: f64,
        minimal_n: usize,
    },

    #[error(
        "kappa is undefined for m = {m}, n = {n}: square-root argument {argument:e} is negative"
    )]
    KappaDomain { m: usize, n: usize, argument: f64 },

    #[error("bound never fell to epsilon = {epsilon} on the supplied grid")]
    NotReached { epsilon: f64 },

    #[error(
        "fold {fold} leaves {train_rows} training rows, fewer than the maximum order {required}"
    )]
    FoldTooSmall {
        fold: usize,
        train_rows: usize,
        required: usize,
    },

    #[error("dataset has no {0}; it is only available for simulated data")]
    MissingGroundTruth(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Io(err.to_string())
    }
}
