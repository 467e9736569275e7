use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: String,
        value: f64,
        reason: &'static str,
    },

    /// The scaling map crosses (or touches) zero inside the operating interval.
    #[error("scaling map s(x1) changes sign near x1 = {x1:.6}")]
    ScalingCrossing { x1: f64 },

    /// The control law is undefined because |s(x1)| is below the singularity threshold.
    #[error("control singular at x1 = {x1:.6}: |s(x1)| = {value:.3e}")]
    ControlSingularity { x1: f64, value: f64 },

    #[error("assumption {assumption} violated: {detail}")]
    Assumption {
        assumption: &'static str,
        detail: String,
    },

    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64, state: Vec<f64> },

    #[error("degenerate orbit: initial condition sits at the potential minimum")]
    DegenerateOrbit,

    #[error("level set is not a closed orbit: {0}")]
    NonPeriodic(String),

    #[error("analysis failed: {0}")]
    Analysis(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("expression error at {pos}: {msg}")]
    Expression { pos: usize, msg: String },
}

impl Error {
    pub(crate) fn analysis(msg: impl Into<String>) -> Self {
        Error::Analysis(msg.into())
    }

    /// True for the errors a closed-loop run reports as a runtime singularity.
    pub fn is_singularity(&self) -> bool {
        matches!(
            self,
            Error::ControlSingularity { .. } | Error::StepUnderflow { .. } | Error::NonFinite(_)
        )
    }
}
