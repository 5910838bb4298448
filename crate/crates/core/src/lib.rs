//! Resonance counting, ordered-tree normal forms and Galerkin integration for
//! the cubic hyperbolic Schrödinger equation
//!
//! ```text
//! i ∂_t u + (∂²_{x1} - ∂²_{x2}) u + |u|² u = 0   on T²
//! ```
//!
//! Everything works on Fourier coefficients. See the `examples/` directory for
//! one runnable program per capability.

pub mod cli;
pub mod error;
pub mod field;
pub mod lattice;
pub mod normal_form;
pub mod probe;
pub mod solver;
pub mod trees;

pub use error::{Error, Result};
pub use field::{FlNormParams, SpectralField};
pub use lattice::{FreqVector, ModulusSign};
