use thiserror::Error;

/// Errors produced by the library.
///
/// Parse variants name the offending line (CSV) or byte offset (binary) so
/// callers can point at the input. `NonFiniteObjective` carries the iteration
/// index at which the optimizer blew up.
#[derive(Debug, Error)]
pub enum Error {
    #[error("no samples")]
    NoSamples,

    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: usize, reason: String },

    #[error("line {line}: expected {expected} values, found {found}")]
    InconsistentWidth {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("line {line}, column {column}: non-finite value")]
    NonFiniteValue { line: usize, column: usize },

    #[error("byte offset {offset}: {reason}")]
    MalformedBinary { offset: u64, reason: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("class {class_id} has zero-norm embedding")]
    ZeroNorm { class_id: u32 },

    #[error("class id lists do not match")]
    ClassIdMismatch,

    #[error("embeddings must be unit-normalized before optimization")]
    NotNormalized,

    #[error("need at least {required} classes, found {found}")]
    TooFewClasses { required: usize, found: usize },

    #[error("non-finite objective at iteration {iteration}: nll={nll}, penalty={penalty}")]
    NonFiniteObjective {
        iteration: usize,
        nll: f64,
        penalty: f64,
    },

    #[error("covariance is singular (damping 0)")]
    SingularCovariance,

    #[error("divergence kind {kind} is not usable as the penalty divergence")]
    InvalidPenaltyDivergence { kind: String },

    #[error("class {class_id} has {available} samples, need {needed}")]
    InsufficientSamples {
        class_id: u32,
        available: usize,
        needed: usize,
    },

    #[error("classes {a} and {b} are not connected in the graph")]
    UnreachablePair { a: u32, b: u32 },

    #[error("class {class_id} is missing from the graph")]
    MissingGraphNode { class_id: u32 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
