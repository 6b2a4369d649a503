use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("domain error: {what} (got {value})")]
    Domain { what: &'static str, value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("covariate `{0}` has fewer than two distinct values")]
    DegenerateCovariate(String),

    #[error("singular posterior precision; offending term `{0}`")]
    SingularPrecision(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(&'static str),

    #[error("unknown term `{0}`")]
    UnknownTerm(String),

    #[error("term `{term}` is a {found} term, expected {expected}")]
    WrongTermKind {
        term: String,
        expected: &'static str,
        found: &'static str,
    },

    #[error("fit did not converge after {0} iterations; refusing to test")]
    NotConverged(usize),

    #[error("degenerate test for `{0}`: null design block gives zero moments")]
    DegenerateTest(String),
}
