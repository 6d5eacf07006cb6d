use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("n = {n} is outside the validity range of the large-N approximation (value {value})")]
    OutsideValidity { n: u32, value: f64 },

    #[error("{0} is unbounded for these inputs")]
    Unbounded(&'static str),

    #[error("both hypotheses assign zero likelihood to the observed counts")]
    ImpossibleData,

    #[error("signal probability {p} is outside the validity regime of the normal approximation")]
    InvalidRegime { p: f64 },

    #[error("probability vector sums to {sum}, expected 1")]
    Unnormalized { sum: f64 },

    #[error("numerical routine failed to converge: {0}")]
    NoConvergence(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

/// Rejects `value` unless it lies in the closed unit interval.
pub(crate) fn check_unit(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(invalid(name, format!("{value} is not in [0, 1]")))
    }
}
