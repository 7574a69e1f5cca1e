use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong while building a model or evaluating it.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("{function} is undefined at {arg} = {value}")]
    Domain {
        function: &'static str,
        arg: &'static str,
        value: f64,
    },

    #[error("cannot parse distribution `{spec}`: {reason}")]
    ParseDistribution { spec: String, reason: String },

    #[error("recurrence became unstable at index {index} (value {value:e})")]
    Instability { index: usize, value: f64 },

    #[error("no sign change for {what} on [{lo}, {hi}]")]
    Bracket {
        what: &'static str,
        lo: f64,
        hi: f64,
    },

    #[error("{quantity} is singular: {detail}")]
    Singular {
        quantity: &'static str,
        detail: String,
    },

    #[error("quadrature missed tolerance {tolerance:e} (estimated error {estimate:e})")]
    Tolerance { tolerance: f64, estimate: f64 },

    #[error("row {row} of the embedded chain sums to {sum}")]
    RowSum { row: usize, sum: f64 },

    #[error("{0} is infinite for this distribution")]
    MomentMissing(&'static str),

    #[error(
        "kernel set for m = {m}, n = {n} cannot serve a model with m = {want_m}, n = {want_n}"
    )]
    Dimension {
        m: usize,
        n: usize,
        want_m: usize,
        want_n: usize,
    },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad input rather than by numerics.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter { .. } | Error::Domain { .. } | Error::ParseDistribution { .. }
        )
    }
}
