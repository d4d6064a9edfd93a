use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("backend mismatch: {0} vs {1}")]
    Backend(String, String),
    #[error("generator has a term of degree {0}; lie_transform needs degree >= 3")]
    GeneratorDegree(usize),
    #[error("zero divisor on nonresonant monomial {0} (declared lattice incomplete?)")]
    ZeroDivisor(String),
    #[error("resonant non-action monomial {0}; pass allow_resonant to keep it")]
    Resonant(String),
    #[error("quadratic part is not elliptic: {0}")]
    NonElliptic(String),
    #[error("index {index} beyond achieved order {order}")]
    BeyondOrder { index: String, order: usize },
    #[error("invalid lattice: {0}")]
    Lattice(String),
    #[error("only {found} of {wanted} sequence entries satisfy the constraints")]
    NotEnoughEntries { found: usize, wanted: usize },
    #[error("coupling terms exceed order {order}: {terms}")]
    CouplingDegree { order: usize, terms: String },
    #[error("invalid model: {0}")]
    Model(String),
    #[error("scale profile violation: {0}")]
    Profile(String),
    #[error("not representable on this backend: {0}")]
    NotRepresentable(String),
    #[error("integration failed: {0}")]
    Integration(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unsupported target: {0}")]
    Target(String),
}

pub type Result<T> = std::result::Result<T, Error>;
