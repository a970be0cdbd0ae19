use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("pole: {0}")]
    Pole(String),
    #[error("singularity: {0}")]
    Singularity(String),
    #[error("no convergence: {what} (error estimate {estimate:.3e})")]
    NonConvergence { what: String, estimate: f64 },
    #[error("invalid quadrature plan: {0}")]
    Plan(String),
    #[error("pattern mismatch: {0}")]
    Pattern(String),
    #[error("constraint violated: {0}")]
    Constraint(String),
    #[error("pole on contour: {0}")]
    PoleOnContour(String),
    #[error("tail divergence: {0}")]
    TailDivergence(String),
    #[error("stencil: {0}")]
    Stencil(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Pole(_) => "PoleError",
            Error::Singularity(_) => "SingularityError",
            Error::NonConvergence { .. } => "NonConvergence",
            Error::Plan(_) => "PlanError",
            Error::Pattern(_) => "PatternError",
            Error::Constraint(_) => "ConstraintError",
            Error::PoleOnContour(_) => "PoleOnContour",
            Error::TailDivergence(_) => "TailDivergence",
            Error::Stencil(_) => "StencilError",
            Error::Invalid(_) => "InvalidInput",
            Error::Parse(_) => "ParseError",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
