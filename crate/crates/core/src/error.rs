use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("trace word letter {letter} out of range for {operands} operands")]
    LetterOutOfRange { letter: usize, operands: usize },

    #[error("singular matrix in jet propagation (condition estimate {cond:.3e})")]
    Singular { cond: f64 },

    #[error("degenerate metric: |det g| = {det:.3e} <= {tol:.3e}")]
    DegenerateMetric { det: f64, tol: f64 },

    #[error("invariant coframe is dependent (condition number {cond:.3e})")]
    DependentCoframe { cond: f64 },

    #[error("vector chi vanishes")]
    ChiVanishes,

    #[error("symbol is not in general position: {0}")]
    NotGeneral(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("only {landed} of {requested} sampled covectors landed off the discriminant variety")]
    InsufficientSamples { landed: usize, requested: usize },

    #[error("minimal-connection Gram matrix is singular (normalized min |eigenvalue| {min_eig:.3e})")]
    SingularGram { min_eig: f64 },

    #[error("gauge is invalid: P * P_inv differs from identity by {residual:.3e}")]
    InvalidGauge { residual: f64 },

    #[error("affine map is singular (det L = {det:.3e})")]
    SingularAffine { det: f64 },

    #[error("invalid operator spec: {0}")]
    InvalidSpec(String),

    #[error(
        "no {n}-subset of invariants has independent differentials on enough grid points (best coverage {coverage:.3})"
    )]
    RankDeficient { n: usize, coverage: f64 },

    #[error("too few regular grid points: {regular} of {total}")]
    TooFewSamples { regular: usize, total: usize },

    #[error("model hulls do not intersect")]
    EmptyOverlap,

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
