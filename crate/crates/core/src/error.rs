use thiserror::Error;

/// Errors raised by the numerical core (kernels, solves, dependence).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericError {
    #[error("input contains a non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("regularization must be positive, got {0}")]
    BadRegularization(f64),
}

/// Errors raised while reading, validating or encoding tabular data.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("I/O error")]
    Io(#[from] std::io::Error),

    #[error("CSV error")]
    Csv(#[from] csv::Error),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("column `{column}` is declared in the schema but missing from the CSV header")]
    MissingColumn { column: String },

    #[error("column `{column}`, row {row}: value `{value}` is not a declared category")]
    UndeclaredCategory {
        column: String,
        row: usize,
        value: String,
    },

    #[error("column `{column}`, row {row}: `{value}` is not a number")]
    NotNumeric {
        column: String,
        row: usize,
        value: String,
    },

    #[error("column `{column}`: binary column must have exactly 2 distinct values, found {found:?}")]
    NotBinary { column: String, found: Vec<String> },

    #[error("label column `{column}`: value `{value}` cannot be mapped onto {{-1, +1}}")]
    UnmappableLabel { column: String, value: String },

    #[error("degenerate labels: every surviving row has label {0:+}")]
    DegenerateLabels(i8),

    #[error("only {0} rows survive missing-value removal; need at least 2")]
    TooFewRows(usize),

    #[error("{0}")]
    Invalid(String),
}

/// Errors from the sensitive-feature detector.
#[derive(Debug, Error)]
pub enum DetectError {
    #[error("column `{column}`: {source}")]
    Column {
        column: String,
        #[source]
        source: NumericError,
    },

    #[error("label operator: {0}")]
    Label(#[source] NumericError),

    #[error("{0}")]
    Invalid(String),
}

/// Errors from the classifier / cross-validation / fairness validation pipeline.
#[derive(Debug, Error)]
pub enum ValidationError {
    #[error("training split contains a single class")]
    SingleClassTraining,

    #[error("fold {fold} contains a single class; use fewer folds or more data")]
    DegenerateFold { fold: usize },

    #[error("need 2 <= folds <= n, got folds = {folds}, n = {n}")]
    BadFolds { folds: usize, n: usize },

    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Detect(#[from] DetectError),
}
