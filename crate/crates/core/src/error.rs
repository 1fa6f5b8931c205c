use thiserror::Error;

/// Errors raised by the model, bath, protocol, dynamics and analysis layers.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// Both BdG matrix elements vanish: the Bogoliubov angle is undefined.
    #[error("degenerate (gapless) point at dmu = {dmu}, k = {k}")]
    Degenerate { dmu: f64, k: f64 },

    /// The local density of states diverges at eps = 0 when z > 1.
    #[error("local density of states diverges at eps = 0 for z = {z}")]
    DivergentDensity { z: f64 },

    #[error("invalid argument `{name}` = {value}: {reason}")]
    InvalidArgument {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("invalid ramp: {0}")]
    InvalidRamp(String),

    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),

    #[error("class B exponent requested but alpha = {alpha} differs from nu*z*beta = {nu_z_beta}")]
    NotClassB { alpha: f64, nu_z_beta: f64 },

    #[error("invalid rescaling scheme id {0} (expected 1..=4)")]
    InvalidScheme(u8),

    #[error("step size underflow at tau = {tau}")]
    StepUnderflow { tau: f64 },

    #[error("step budget of {max_steps} exhausted at tau = {tau}")]
    StepBudget { tau: f64, max_steps: usize },

    #[error("quadrature did not converge: {coarse} (N) vs {fine} (2N), target {target}")]
    QuadratureNotConverged { coarse: f64, fine: f64, target: f64 },

    #[error(
        "fixed-velocity ladder did not converge after {} rungs; last relative change {last_change:e}",
        ladder.len()
    )]
    LadderNotConverged {
        ladder: Vec<(f64, f64)>,
        last_change: f64,
    },

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("invalid curve: {0}")]
    InvalidCurve(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument {
            name,
            value,
            reason: "must be positive and finite",
        })
    }
}

pub(crate) fn check_non_negative(name: &'static str, value: f64) -> Result<()> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument {
            name,
            value,
            reason: "must be non-negative and finite",
        })
    }
}
