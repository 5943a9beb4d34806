use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {what}: expected {expected}, found {found}")]
    ShapeMismatch {
        what: &'static str,
        expected: String,
        found: String,
    },
    #[error("non-finite value in {what} at ({row}, {col})")]
    NonFinite {
        what: &'static str,
        row: usize,
        col: usize,
    },
    #[error("index value {value} at ({row}, {col}) outside support [{min}, {max}]")]
    SupportViolation {
        value: f64,
        row: usize,
        col: usize,
        min: f64,
        max: f64,
    },
    #[error("panel too small: N={n}, T={t} (need N >= 2 and T >= 2)")]
    TooSmall { n: usize, t: usize },
    #[error("invalid support [{min}, {max}]")]
    InvalidSupport { min: f64, max: f64 },
    #[error("invalid spline spec: {0}")]
    InvalidSpec(String),
    #[error("u = {u} outside support [{min}, {max}]")]
    OutOfSupport { u: f64, min: f64, max: f64 },
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("factor matrix not normalized: max |F'F/T - I| = {deviation:e}")]
    NotNormalized { deviation: f64 },
    #[error("singular design: reciprocal condition {rcond:e}")]
    SingularDesign { rcond: f64 },
    #[error("symmetric eigensolver did not converge")]
    EigenFailure,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("empty candidate grid")]
    EmptyGrid,
    #[error("every candidate factor count gives an exact fit; smallest exact r = {smallest_exact_r}")]
    AllDegenerate { smallest_exact_r: usize },
    #[error("block length {len} invalid for T = {t}")]
    BadBlockLength { len: usize, t: usize },
    #[error("too many failed bootstrap draws: {failed} of {total}")]
    TooManyFailures { failed: usize, total: usize },
    #[error("unbalanced panel: no observation for subject {subject}, time {time}")]
    UnbalancedPanel { subject: String, time: String },
    #[error("duplicate observation for subject {subject}, time {time} (row {row})")]
    DuplicateCell {
        subject: String,
        time: String,
        row: usize,
    },
    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Whether the error comes from reading or decoding input data.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::UnbalancedPanel { .. }
                | Error::DuplicateCell { .. }
                | Error::Parse { .. }
                | Error::Io(_)
        )
    }
}
