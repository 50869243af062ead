use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid device: {0}")]
    InvalidDevice(String),

    #[error("invalid drive: {0}")]
    InvalidDrive(String),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid basis parameters: {0}")]
    InvalidBasis(String),

    #[error("basis dimension {dim} exceeds the limit of {limit}")]
    DimensionOverflow { dim: u128, limit: usize },

    #[error("occupation tuple {0:?} is not in the basis")]
    StateNotInBasis(Vec<u8>),

    #[error("operands live in different Hilbert spaces")]
    BasisMismatch,

    #[error("site {site} out of range for a {n_sites}-site chain")]
    SiteOutOfRange { site: usize, n_sites: usize },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("operator is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("expectation value has imaginary residue {0:.3e}")]
    ComplexExpectation(f64),

    #[error("integrator: {0}")]
    Integrator(String),

    #[error("step-halving check failed: observables moved by {drift:.3e} (limit {limit:.1e})")]
    StepHalving { drift: f64, limit: f64 },

    #[error("post-selection kept no weight")]
    EmptyPostSelection,

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
