use thiserror::Error;

/// Errors raised by the landscape machinery.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("index out of range: {what} = {index} (len {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("principal logarithm is branch-degenerate: eigen-angle {angle} sits on the cut at -pi")]
    DegenerateBranch { angle: f64 },

    #[error("enumeration bound exceeded: N = {n} > {cap}")]
    EnumerationBound { n: usize, cap: usize },

    #[error("flow step too large at s = {s}: monotonicity violated, retry with step {suggested:e}")]
    StepTooLarge { s: f64, suggested: f64 },

    #[error("singular resolvent in closed-form gate flow at s = {s}")]
    SingularResolvent { s: f64 },

    #[error("convergence bound not applicable: {0}")]
    BoundInapplicable(String),

    #[error("initial state has no overlap with the top eigenspace; flow converges to a saddle")]
    SaddleLimit,

    #[error("near-critical manifold at s = {s}: Gamma = {gamma:e} below {gamma_min:e}")]
    NearCritical { s: f64, gamma: f64, gamma_min: f64 },

    #[error("adaptive step underflow at s = {s} (ds < {floor:e})")]
    StepUnderflow { s: f64, floor: f64 },

    #[error("track value {value} at s = {s} outside attainable range [{lo}, {hi}]")]
    InfeasibleTrack { s: f64, value: f64, lo: f64, hi: f64 },

    #[error("observable drift blew up at s = {s}: |drift| = {drift:e}")]
    DriftBlowUp { s: f64, drift: f64 },

    #[error("correlation matrix ill-conditioned at s = {s}: cond = {condition:e}")]
    IllConditioned { s: f64, condition: f64 },

    #[error("tracking diverged at s = {s}: residual {residual:e}")]
    TrackingDiverged { s: f64, residual: f64 },

    #[error("observable set is linearly dependent")]
    DependentObservables,

    #[error("negative outcome probability {0:e}")]
    NegativeProbability(f64),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for failures of a numerical procedure, as opposed to malformed input.
    pub fn is_numerical(&self) -> bool {
        !matches!(
            self,
            Error::DimensionMismatch(_)
                | Error::InvalidInput(_)
                | Error::NonFinite(_)
                | Error::IndexOutOfRange { .. }
                | Error::EnumerationBound { .. }
                | Error::BoundInapplicable(_)
        )
    }
}
