use thiserror::Error;

/// Errors raised by the simulator, the estimators and the I/O layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("mode with wavevector ({n1}, {n2}) is not resolved by a {grid_n}x{grid_n} grid (need {needed})")]
    UnresolvedMode {
        n1: i64,
        n2: i64,
        grid_n: usize,
        needed: String,
    },

    #[error("coefficient {mode} reached {value:e} at step {step}, above the blow-up bound {bound:e}")]
    BlowUp {
        step: usize,
        mode: usize,
        value: f64,
        bound: f64,
    },

    #[error("estimator denominator is not positive ({0:e}); the observed path is degenerate")]
    DegenerateDenominator(f64),

    #[error("exponent out of range: {0}")]
    ExponentOutOfRange(String),

    #[error("invalid `{field}`: {rule}")]
    Config { field: String, rule: String },

    #[error("malformed trajectory file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, rule: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            rule: rule.into(),
        }
    }

    /// True for failures that come from the numerics rather than from input validation.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::BlowUp { .. } | Error::DegenerateDenominator(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
