use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("input error: {0}")]
    Input(String),

    #[error("eigenvalue {eigenvalue} lies outside the domain {domain}")]
    SpectrumDomain { eigenvalue: f64, domain: String },

    #[error("point {x} lies outside the domain {domain}")]
    Domain { x: f64, domain: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("singular operand: {0}")]
    Singularity(String),

    #[error("{0} requires analytic derivatives, which this function does not provide")]
    DerivativeRequired(String),

    #[error("construction failed at x = {witness}: {reason}")]
    Construction { witness: f64, reason: String },

    #[error("parse error at byte {offset}: expected {}", expected.join(" or "))]
    Parse { offset: usize, expected: Vec<String> },

    #[error("finite-difference step {step} pushes the spectrum out of the domain")]
    StepTooLarge { step: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("structure error: {0}")]
    Structure(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
