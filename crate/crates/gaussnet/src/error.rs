use thiserror::Error;

/// Errors raised by the approximation pipeline.
///
/// The variants map onto the CLI exit-code contract: [`Error::is_usage`] marks
/// failures caused by bad input (exit 2), everything else is a runtime failure.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(
        "conditioning: 1/phi_hat needs exp({exponent:.3}) at the ball edge, above the limit exp({limit})"
    )]
    Conditioning { exponent: f64, limit: f64 },

    #[error("domain: spacing h = {h} is not below pi/R = {limit} (aliasing regime)")]
    Aliasing { h: f64, limit: f64 },

    #[error("resource: lattice of {count} points exceeds the cap of {cap}")]
    LatticeCap { count: usize, cap: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("budget {budget} is below the funding threshold N0 = {n0}")]
    BelowThreshold { budget: usize, n0: usize },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("study: {0}")]
    Study(String),

    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("json at byte offset {offset} (line {line}, column {column}): {message}")]
    Json {
        offset: usize,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors that the CLI reports as usage/input failures.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::DimensionMismatch { .. }
                | Error::InvalidInput(_)
                | Error::Aliasing { .. }
                | Error::Config { .. }
                | Error::Json { .. }
                | Error::Degenerate(_)
                | Error::Conditioning { .. }
        )
    }

    /// Wrap a serde_json error, converting its line/column into a byte offset in `src`.
    pub fn json(err: serde_json::Error, src: &str) -> Error {
        let (line, column) = (err.line(), err.column());
        Error::Json {
            offset: byte_offset(src, line, column),
            line,
            column,
            message: err.to_string(),
        }
    }
}

fn byte_offset(src: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut offset = 0;
    for (i, l) in src.split_inclusive('\n').enumerate() {
        if i + 1 == line {
            return offset + column.saturating_sub(1).min(l.len());
        }
        offset += l.len();
    }
    src.len()
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_offset_counts_previous_lines() {
        let src = "{\n  \"a\": x\n}";
        let err = serde_json::from_str::<serde_json::Value>(src).unwrap_err();
        let e = Error::json(err, src);
        match e {
            Error::Json { offset, .. } => assert_eq!(&src[offset..offset + 1], "x"),
            _ => unreachable!(),
        }
    }
}
