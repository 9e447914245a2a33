use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{what} did not converge (last residual {residual:.3e})")]
    NonConvergence { what: String, residual: f64 },
    #[error("blow-up at t = {t} (gradient norm {grad_norm:.3e})")]
    BlowUp { t: f64, grad_norm: f64 },
    #[error("decomposition lost at t = {t}: |F| = {residual:.3e}, remainder norm {eps_norm:.3e}")]
    DecompositionLoss { t: f64, residual: f64, eps_norm: f64 },
    #[error("singular decomposition Jacobian (smallest singular value {min_singular:.3e})")]
    SingularJacobian { min_singular: f64 },
    #[error("horizon too short: truncated tail variance {tail_variance:.3e}")]
    HorizonTooShort { tail_variance: f64 },
    #[error("temporal profile violates the tail condition first at t = {t}")]
    ConditionViolated { t: f64 },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("malformed input: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub fn insufficient(msg: impl Into<String>) -> Self {
        Error::InsufficientData(msg.into())
    }

    /// Numerical failures as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::BlowUp { .. }
                | Error::DecompositionLoss { .. }
                | Error::SingularJacobian { .. }
                | Error::HorizonTooShort { .. }
                | Error::ConditionViolated { .. }
                | Error::InsufficientData(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
