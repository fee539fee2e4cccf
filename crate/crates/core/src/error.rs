use thiserror::Error;

/// Errors produced by the simulation and analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("integrator failure at t = {time}: {reason}")]
    Integrator { time: f64, reason: String },

    #[error("grid half-width {half_width} too small for level {level} (need at least {required})")]
    DomainTooSmall {
        level: usize,
        half_width: f64,
        required: f64,
    },

    #[error("capture is undefined at tau = {tau_final}: first ladder crossing is at tau = {first_crossing}")]
    UndefinedCapture { tau_final: f64, first_crossing: f64 },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("scan does not span the transition (P from {p_min:.3} to {p_max:.3}); try drives in [{suggested_lo:.6}, {suggested_hi:.6}]")]
    NeedsWiderScan {
        p_min: f64,
        p_max: f64,
        suggested_lo: f64,
        suggested_hi: f64,
    },

    #[error("scaling law outside its validity range: {0}")]
    OutOfValidity(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
