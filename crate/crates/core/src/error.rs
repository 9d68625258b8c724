use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid `{field}`: {reason}")]
    Validation { field: &'static str, reason: String },

    #[error("insufficient resolution: {0}")]
    Resolution(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A singular value of a discretized memory map exceeded the physical bound.
    #[error("quadrature inconsistency: efficiency {efficiency} exceeds 1 (m = {azimuthal}); refine the frequency grid")]
    QuadratureInconsistency { azimuthal: u32, efficiency: f64 },

    #[error("azimuthal truncation: block m = {azimuthal} still holds {modes} mode(s) above threshold; raise m_max")]
    Truncation { azimuthal: u32, modes: usize },

    #[error("no convergence after {rounds} refinement rounds: {detail}")]
    Convergence { rounds: usize, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Validation { field, reason: reason.into() }
    }
}
