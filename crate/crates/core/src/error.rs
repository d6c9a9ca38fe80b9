use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied argument is out of range or inconsistent.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// The column-role map does not match the input file.
    #[error("schema error: {0}")]
    Schema(String),

    /// Input values violate a dataset invariant. `rows` holds 1-based data row numbers.
    #[error("validation error: {message}{}", fmt_rows(.rows))]
    Validation { message: String, rows: Vec<usize> },

    /// A numerical precondition failed (singular Gram matrix, empty path, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A cross-fitting fold cannot be used to train a learner.
    #[error("fold {fold}: {message}")]
    Fold { fold: usize, message: String },

    /// The operation is not defined for this model kind.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Simulation-only diagnostics called on data without potential outcomes.
    #[error("mode error: {0}")]
    Mode(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn validation(msg: impl Into<String>, rows: Vec<usize>) -> Self {
        Error::Validation {
            message: msg.into(),
            rows,
        }
    }

    /// True for errors caused by bad user input rather than a failed computation.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Argument(_) | Error::Schema(_) | Error::Validation { .. }
        )
    }
}

fn fmt_rows(rows: &[usize]) -> String {
    const SHOWN: usize = 20;
    if rows.is_empty() {
        return String::new();
    }
    let listed: Vec<String> = rows.iter().take(SHOWN).map(|r| r.to_string()).collect();
    let more = if rows.len() > SHOWN {
        format!(" and {} more", rows.len() - SHOWN)
    } else {
        String::new()
    };
    format!(" (rows {}{more})", listed.join(", "))
}
