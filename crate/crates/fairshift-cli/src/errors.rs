//! CLI error classification.
//!
//! Exit codes: 0 success, 1 validation error (bad flags, bad config, bad
//! parameter values), 2 runtime/data error (unreadable files, malformed
//! data, pools too small, numerical aborts).

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    /// The request itself is invalid; fix the command line or config.
    Validation(String),
    /// The request was valid but execution failed on data or environment.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        CliError::Runtime(msg.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid request: {m}"),
            CliError::Runtime(m) => write!(f, "run failed: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<fairshift::Error> for CliError {
    fn from(e: fairshift::Error) -> Self {
        use fairshift::Error as E;
        match e {
            // Caller gave an impossible or inconsistent request.
            E::InvalidParameter { .. }
            | E::Empty(_)
            | E::ZeroCell { .. }
            | E::DegenerateSplit { .. }
            | E::TooFewFolds(_)
            | E::DimensionMismatch { .. } => CliError::Validation(e.to_string()),
            // The request was fine; the data or the run let it down.
            E::Io(_)
            | E::Csv(_)
            | E::Json(_)
            | E::MalformedData(_)
            | E::InsufficientCell { .. }
            | E::NonFinite { .. }
            | E::AllZeroWeights
            | E::MetricPrecondition(_)
            | E::AllReplicatesFailed(_) => CliError::Runtime(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
