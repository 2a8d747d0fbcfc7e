use thiserror::Error;

/// Errors raised by state manipulation, optics and protocol evaluation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("mode `{0}` appears more than once")]
    DuplicateMode(String),

    #[error("mode `{0}` is not part of the state")]
    UnknownMode(String),

    #[error("mode sets differ: expected [{expected}], found [{found}]")]
    ModeMismatch { expected: String, found: String },

    #[error("amplitude table has length {found}, expected {expected}")]
    Dimension { expected: usize, found: usize },

    /// Post-selection on an outcome that cannot occur.
    #[error("impossible branch: outcome probability {prob:e} is numerically zero")]
    ImpossibleBranch { prob: f64 },

    #[error("state is not normalized (squared norm {norm_sq})")]
    NotNormalized { norm_sq: f64 },

    #[error("invalid value {value} for `{name}`: {reason}")]
    InvalidParameter {
        name: String,
        value: f64,
        reason: &'static str,
    },

    #[error("partial mode overlap requires a density-operator state")]
    RequiresMixedState,

    #[error("product state (alpha*beta = 0) cannot be filtered into a maximally entangled pair")]
    ProductState,

    #[error("setting {0} has no counts")]
    EmptySetting(usize),
}

impl Error {
    pub(crate) fn invalid(name: &str, value: f64, reason: &'static str) -> Self {
        Error::InvalidParameter {
            name: name.to_string(),
            value,
            reason,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
