use thiserror::Error;

/// Errors raised by the numerical and combinatorial routines of this crate.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("singular matrix: {0}")]
    SingularMatrix(String),
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("dimension {dim} exceeds the limit {limit}")]
    DimensionTooLarge { dim: usize, limit: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("overflow: {0}")]
    Overflow(String),
    #[error("base orbit left the domain at step {step}")]
    NonFiniteOrbit { step: usize },
    #[error("word is not admissible: no edge {from} -> {to} at position {position}")]
    NotAdmissible { from: u32, to: u32, position: i64 },
    #[error("points are not on the same local {side} set")]
    NotOnSameLeaf { side: &'static str },
    #[error("period {q} exceeds the enumeration limit {limit}")]
    TooLong { q: usize, limit: usize },
    #[error("transition weights are not stochastic: {0}")]
    NotStochastic(String),
    #[error("matrix is not hyperbolic: eigenvalue modulus {modulus} is too close to 1")]
    NotHyperbolic { modulus: f64 },
    #[error("integer matrix is not unimodular: det = {det}")]
    NotUnimodular { det: i128 },
    #[error("period {n} is degenerate: det(A^n - I) = 0")]
    DegeneratePeriod { n: usize },
    #[error("singular jacobian in Newton iteration")]
    SingularJacobian,
    #[error("invalid lattice vector: {0}")]
    InvalidLattice(String),
    #[error("perturbation support is re-entered at orbit step {step}")]
    SupportViolation { step: i64 },
    #[error("eigenbasis condition number {cond:.3e} exceeds {limit:.1e}")]
    IllConditionedEigenbasis { cond: f64, limit: f64 },
    #[error("points are not asymptotic along the {side} direction")]
    NotAsymptotic { side: &'static str },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    /// True for failures that mean "the numerics gave up" rather than "the input is wrong".
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularMatrix(_)
                | Error::NoConvergence(_)
                | Error::Overflow(_)
                | Error::NonFiniteOrbit { .. }
                | Error::SingularJacobian
                | Error::IllConditionedEigenbasis { .. }
                | Error::NotAsymptotic { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
