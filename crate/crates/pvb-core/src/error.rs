//! Error taxonomy shared by the whole crate.

use thiserror::Error;

/// Every failure mode a caller can see.
#[derive(Debug, Error)]
pub enum Error {
    /// Input rows that cannot be interpreted as the documented format.
    #[error("malformed input at line {line}: {reason}")]
    MalformedInput { line: u64, reason: String },

    /// A referenced column is not present in the input.
    #[error("unknown column {0:?}")]
    UnknownColumn(String),

    /// No data rows at all.
    #[error("dataset is empty")]
    EmptyDataset,

    /// A denominator required by a closed-form estimator is zero.
    #[error("degenerate margin: {0}")]
    DegenerateMargin(&'static str),

    /// The weighted design matrix lost full column rank.
    #[error("design matrix is rank deficient (column {column})")]
    RankDeficientDesign { column: usize },

    /// Coefficients diverged, the classic signature of separated data.
    #[error("logistic fit diverged, data are (quasi-)separated")]
    SeparationDetected,

    /// Row width does not match the fitted coefficient vector.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// More bootstrap replicates failed than the configured ceiling allows.
    #[error("{failed} of {total} bootstrap replicates failed (ceiling {max_failed_fraction})")]
    TooManyFailedReplicates {
        failed: usize,
        total: usize,
        max_failed_fraction: f64,
    },

    /// An imputed dataset kept hitting zero margins past the retry cap.
    #[error("imputation {slot} degenerate after {retries} redraws: {reason}")]
    DegenerateImputation {
        slot: usize,
        retries: usize,
        reason: &'static str,
    },

    /// Argument outside the mathematical domain of a quantile function.
    #[error("domain error: {0}")]
    DomainError(&'static str),

    /// A simulation specification that cannot be generated from.
    #[error("invalid simulation spec: {0}")]
    InvalidSpec(String),

    /// Configuration value outside its documented range.
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),

    /// Underlying I/O failure while reading or writing data.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Coarse classification used by front ends to map errors to exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    /// Problems with input data or configuration values.
    Data,
    /// Numerical failures during estimation.
    Numerical,
    /// Everything else (I/O).
    Io,
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::MalformedInput { .. }
            | Error::UnknownColumn(_)
            | Error::EmptyDataset
            | Error::InvalidSpec(_)
            | Error::InvalidConfig(_) => ErrorCategory::Data,
            Error::DegenerateMargin(_)
            | Error::RankDeficientDesign { .. }
            | Error::SeparationDetected
            | Error::DimensionMismatch { .. }
            | Error::TooManyFailedReplicates { .. }
            | Error::DegenerateImputation { .. }
            | Error::DomainError(_) => ErrorCategory::Numerical,
            Error::Io(_) => ErrorCategory::Io,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn categories_partition_the_enum() {
        assert_eq!(
            Error::EmptyDataset.category(),
            ErrorCategory::Data,
        );
        assert_eq!(
            Error::SeparationDetected.category(),
            ErrorCategory::Numerical,
        );
        let io = Error::Io(std::io::Error::new(std::io::ErrorKind::Other, "x"));
        assert_eq!(io.category(), ErrorCategory::Io);
    }
}
