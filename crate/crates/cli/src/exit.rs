//! Process exit codes by failure class.

use std::fmt;

use sensdetect::{DataError, DetectError, NumericError, ValidationError};

pub const OTHER: i32 = 1;
pub const CONFIG: i32 = 2;
pub const DATA: i32 = 3;
pub const NUMERIC: i32 = 4;

/// Invalid flags or parameter combinations.
#[derive(Debug)]
pub struct ConfigError(String);

impl ConfigError {
    pub fn new(msg: impl Into<String>) -> Self {
        Self(msg.into())
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn detect_code(e: &DetectError) -> i32 {
    match e {
        DetectError::Column { .. } | DetectError::Label(_) => NUMERIC,
        DetectError::Invalid(_) => CONFIG,
    }
}

pub fn code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return CONFIG;
        }
        if cause.is::<DataError>() {
            return DATA;
        }
        if cause.is::<NumericError>() {
            return NUMERIC;
        }
        if let Some(e) = cause.downcast_ref::<DetectError>() {
            return detect_code(e);
        }
        if let Some(e) = cause.downcast_ref::<ValidationError>() {
            return match e {
                ValidationError::BadFolds { .. } | ValidationError::Invalid(_) => CONFIG,
                ValidationError::DegenerateFold { .. } | ValidationError::SingleClassTraining => DATA,
                ValidationError::Detect(d) => detect_code(d),
            };
        }
    }
    OTHER
}
