use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("value {value} is outside the domain [{min}, {max}]")]
    OutOfDomain { value: f64, min: f64, max: f64 },

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("record {index} is outside the bin grid: {reason}")]
    OutOfRange { index: usize, reason: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("IWLS did not converge after {iterations} iterations (last deviance {deviance})")]
    Convergence { iterations: usize, deviance: f64 },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("smoothing parameter search failed: {0}")]
    Search(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("surfaces are not aligned: {0}")]
    Alignment(String),

    #[error("bootstrap failed: {0}")]
    Bootstrap(String),

    #[error("linear system is not positive definite: {0}")]
    Singular(String),
}

impl Error {
    /// True for failures of the numerical machinery, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Convergence { .. }
                | Error::DegenerateData(_)
                | Error::Search(_)
                | Error::Bootstrap(_)
                | Error::Singular(_)
        )
    }
}
