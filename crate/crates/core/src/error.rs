use num_complex::Complex64;
use thiserror::Error;

/// Malformed polynomial text, with the byte offset where parsing failed.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("at position {position}: {message}")]
pub struct ParseError {
    pub position: usize,
    pub message: String,
}

#[derive(Debug, Clone, Error)]
pub enum PolyError {
    #[error("operation requires degree >= {required}, got {degree}")]
    DegreeTooLow { degree: usize, required: usize },
    #[error("root finder did not converge after {iterations} iterations (worst residual {worst_residual:e})")]
    NoConvergence {
        iterations: usize,
        iterates: Vec<Complex64>,
        residuals: Vec<f64>,
        worst_residual: f64,
    },
    #[error(transparent)]
    Parse(#[from] ParseError),
}

#[derive(Debug, Clone, Error)]
pub enum MapError {
    #[error("numerator and denominator must be nonzero polynomials")]
    ZeroPolynomial,
    #[error("0/0 at {point}: coincident zero and pole is not registered as removable")]
    Indeterminate { point: Complex64 },
    #[error("{point} is a {kind} of the map; phase is undefined there")]
    Singular { point: Complex64, kind: SingularKind },
    #[error(transparent)]
    Poly(#[from] PolyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SingularKind {
    Zero,
    Pole,
    Removable,
}

impl std::fmt::Display for SingularKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SingularKind::Zero => "zero",
            SingularKind::Pole => "pole",
            SingularKind::Removable => "removable point",
        })
    }
}

#[derive(Debug, Clone, Error)]
pub enum TraceError {
    #[error("seed corrector diverged near {pole} (eps = {eps:e}); retry with a smaller eps")]
    SeedDiverged { pole: Complex64, eps: f64 },
    #[error("seed {seed} does not satisfy the phase condition (residual {residual:e})")]
    SeedOffLocus { seed: Complex64, residual: f64 },
    #[error("trace needs at least two points")]
    TooShort,
    #[error(transparent)]
    Map(#[from] MapError),
}

#[derive(Debug, Clone, Error)]
pub enum SmaleError {
    #[error("polynomial degree {0} is below 2")]
    DegreeTooLow(usize),
    #[error("critical point multiplicities sum to {found}, expected {expected}")]
    CriticalCount { found: usize, expected: usize },
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Map(#[from] MapError),
}
