//! Birkhoff normal forms, Poisson-series algebra and the flow experiments
//! around divergent normal forms of elliptic equilibria.

pub mod bigfloat;
pub mod bnf;
pub mod error;
pub mod flow;
pub mod eval;
pub mod frequency;
pub mod models;
pub mod scalar;
pub mod series;

pub use error::{Error, Result};
pub use frequency::{frequency_pairing, split_resonant, FrequencyVector, Resonance};
pub use scalar::{Backend, Scalar};
pub use series::{ActionIndex, Monomial, PoissonSeries, SIGMA};
