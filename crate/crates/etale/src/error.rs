use thiserror::Error;

/// Library-wide error type.
///
/// Validation failures carry enough context to act as counterexample
/// witnesses: a structure error names the offending arrows, a cocycle
/// violation names the triple where the identity fails.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed spec: {0}")]
    MalformedSpec(String),

    #[error("structure error: {reason}; witness: {witness}")]
    Structure { reason: String, witness: String },

    #[error("arrows not composable: source of left is {left_source}, range of right is {right_range}")]
    NotComposable {
        left_source: String,
        right_range: String,
    },

    #[error("cocycle identity fails at triple ({a}, {b}, {c}): lhs {lhs} != rhs {rhs}")]
    CocycleViolation {
        a: String,
        b: String,
        c: String,
        lhs: String,
        rhs: String,
    },

    #[error("cocycle not normalized at {arrow}: value {value}")]
    CocycleNotNormalized { arrow: String, value: String },

    #[error("cocycle variant incompatible with model: {0}")]
    IncompatibleVariant(String),

    #[error("incompatible denominator: {0}")]
    IncompatibleDenominator(String),

    #[error("model mismatch: {0}")]
    ModelMismatch(String),

    #[error("arrow not in model: {0}")]
    UnknownArrow(String),

    #[error("bundle incompatible with model: {0}")]
    BundleIncompatible(String),

    #[error("support not certified inside the isotropy interior: {0}")]
    NotInterior(String),

    #[error("operation not supported on this model: {0}")]
    UnsupportedModel(String),

    #[error("iteration cap {cap} reached; last estimate {last:.12e} (valid lower bound)")]
    ConvergenceFailure { cap: u32, last: f64 },

    #[error("numerical rank ambiguous: {0}")]
    NumericalRankAmbiguity(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
