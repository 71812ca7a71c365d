use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A documented precondition was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),
    /// The map description is not a valid Markov map.
    #[error("invalid map: {0}")]
    InvalidMap(String),
    /// A point lies on an atom boundary where the one-sided derivatives differ.
    #[error("point {x} lies on an atom boundary (one-sided derivatives {left} and {right})")]
    Boundary { x: f64, left: f64, right: f64 },
    /// An inverse branch could not be solved inside the atom.
    #[error("root finding failed for target {target} on atom {atom}")]
    RootFinding { atom: usize, target: f64 },
    /// A word is not admissible for the transition table.
    #[error("inadmissible word {0:?}")]
    Inadmissible(Vec<usize>),
    /// An iterative method failed to reach its tolerance.
    #[error("no convergence: {0}")]
    Convergence(String),
    /// A generic numerical failure.
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// A standing hypothesis does not hold for the instance.
    #[error("hypothesis {condition} violated: {detail}")]
    Hypothesis { condition: String, detail: String },
    /// A correlation horizon exceeds what the cylinder depth supports.
    #[error("horizon {requested} exceeds the supported horizon {supported}; use the orbit estimator")]
    Horizon { requested: usize, supported: usize },
    /// Configuration could not be read.
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn hypothesis(condition: &str, detail: impl Into<String>) -> Self {
        Error::Hypothesis {
            condition: condition.to_string(),
            detail: detail.into(),
        }
    }
}
