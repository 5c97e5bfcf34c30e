use thiserror::Error;

/// Errors produced by model construction, simulation and training.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// The integrated state stopped being finite.
    #[error("state diverged (non-finite) at t = {time}")]
    Divergence { time: f64 },

    /// The pairing matrix between the two bases is numerically singular.
    #[error("singular basis pairing: rcond = {rcond:.3e}")]
    SingularProjection { rcond: f64 },

    /// The QR factor used by the retraction lost column rank.
    #[error("degenerate retraction: rank-deficient QR factor")]
    DegenerateRetraction,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("optimization failed: {0}")]
    Optim(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for failures of the numerics (as opposed to bad configuration
    /// or unreadable files); the CLI maps these to a distinct exit code.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Divergence { .. }
                | Error::SingularProjection { .. }
                | Error::DegenerateRetraction
                | Error::Optim(_)
        )
    }
}
