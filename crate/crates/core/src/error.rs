use alloc::string::String;

/// Errors raised by the model, key-rate, simulation and analysis layers.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A parameter is outside its physical domain.
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    /// The product of Bob's efficiency and channel transmittance is zero.
    #[error("zero overall transmission (eta * G = 0)")]
    ZeroTransmission,

    /// A logarithm argument in the Bob-Eve information is not positive.
    #[error("non-positive {which} in Bob-Eve information ({value})")]
    EveInformation { which: &'static str, value: f64 },

    /// Too few points, or too few distinct abscissae, for a least-squares fit.
    #[error("rank-deficient fit: {0}")]
    RankDeficient(&'static str),

    /// An integration window or pulse index falls outside the trace.
    #[error("window {index} [{start}, {end}) outside trace of {len} samples")]
    WindowOutOfBounds {
        index: usize,
        start: usize,
        end: usize,
        len: usize,
    },

    /// A range argument (sweep axis, optimizer bracket) is empty or inverted.
    #[error("invalid range: {0}")]
    InvalidRange(&'static str),

    /// Simulation configuration violates its constraints.
    #[error("invalid simulation config: {0}")]
    InvalidSimConfig(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn positive(name: &'static str, value: f64) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must be finite and > 0",
        })
    }
}

pub(crate) fn non_negative(name: &'static str, value: f64) -> Result<f64> {
    if value >= 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must be finite and >= 0",
        })
    }
}

pub(crate) fn unit_interval(name: &'static str, value: f64) -> Result<f64> {
    if value > 0.0 && value <= 1.0 {
        Ok(value)
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must lie in (0, 1]",
        })
    }
}
