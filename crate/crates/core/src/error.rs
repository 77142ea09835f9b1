use thiserror::Error;

/// Errors raised by the numerical pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("order error: {0}")]
    Order(String),

    #[error("exponent error: m = {0} (must be an integer >= 2)")]
    Exponent(u32),

    #[error("singular point: fractional gradient undefined at x = y = {0}")]
    SingularPoint(f64),

    #[error("non-finite values in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("exterior data must vanish on the domain (max |f| there = {0:e})")]
    ExteriorSupport(f64),

    #[error("internal consistency: {0}")]
    Internal(String),

    #[error("Picard iteration did not converge in {iterations} iterations (last increment {last:e})")]
    NonConvergence {
        iterations: usize,
        last: f64,
        history: Vec<f64>,
    },

    #[error("Picard iteration diverged at iteration {iteration}")]
    Divergence { iteration: usize, history: Vec<f64> },

    #[error("regularization parameter must be positive, got {0}")]
    Regularization(f64),

    #[error("normal equations are too ill-conditioned at alpha = {alpha:e}; increase alpha")]
    Conditioning { alpha: f64 },

    #[error("degenerate probe: {0}")]
    DegenerateProbe(String),

    #[error("probe quality: {0}")]
    ProbeQuality(String),

    #[error("underdetermined: {probes} probes for {unknowns} unknowns")]
    Underdetermined { probes: usize, unknowns: usize },

    #[error("maximum principle violated: min u1 on the domain = {0:e}")]
    MaxPrinciple(f64),

    #[error("parse error at offset {offset}: {msg}")]
    Parse { offset: usize, msg: String },

    #[error("cache format: {0}")]
    Cache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the forward solver (used to pick the CLI exit code).
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. } | Error::Divergence { .. } | Error::Internal(_) | Error::NonFinite(_)
        )
    }

    /// True for failures of the recovery procedures.
    pub fn is_inversion_failure(&self) -> bool {
        matches!(
            self,
            Error::Regularization(_)
                | Error::Conditioning { .. }
                | Error::DegenerateProbe(_)
                | Error::ProbeQuality(_)
                | Error::Underdetermined { .. }
                | Error::MaxPrinciple(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
