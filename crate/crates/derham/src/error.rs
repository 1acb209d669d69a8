use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter point: {0}")]
    InvalidPoint(String),

    #[error("jet order mismatch: {left} vs {right}")]
    OrderMismatch { left: usize, right: usize },

    #[error("jet order {0} exceeds the supported maximum {max}", max = crate::jet::MAX_ORDER)]
    OrderTooLarge(usize),

    #[error("division by a jet with (near-)zero constant term")]
    DivisionSingularity,

    #[error("digit stream exhausted: only {found} one-digits available")]
    OnesExhausted { found: usize },

    #[error("first_disagreement called on equal points")]
    EqualInputs,

    #[error("result {0} outside [0,1)")]
    OutOfRange(f64),

    #[error("binary expansion has an all-ones repeating block")]
    AllOnesPeriod,

    #[error("binary expansion period exceeds {0} digits")]
    PeriodTooLong(usize),

    #[error("cannot parse point \"{0}\"")]
    PointParse(String),

    #[error("series did not reach tolerance {requested:e} within {terms} terms (achieved {achieved:e})")]
    PrecisionExhausted {
        requested: f64,
        achieved: f64,
        terms: usize,
    },

    #[error("recursion invariant violated at step {step}: {what}")]
    Instability { step: usize, what: &'static str },

    #[error("degenerate denominator: F(x) = F(y) within resolution")]
    DegenerateDenominator,

    #[error("{0} requires a non-dyadic point")]
    DyadicPoint(&'static str),

    #[error("{0} requires a dyadic point")]
    NonDyadicPoint(&'static str),

    #[error("both delta_1 and its dual are undefined; contradicts the Mobius-ratio structure")]
    DeltaInconsistency,

    #[error("unknown experiment \"{0}\"")]
    UnknownExperiment(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
