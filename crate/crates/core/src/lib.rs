//! Numerical verification toolkit for the separation-of-variables calculus of
//! SL(2,C) spin magnets: special functions, plane quadrature, exact a-factor
//! algebra, Feynman-diagram rewriting, eigenfunctions and a Mellin-Barnes
//! sum-integral engine.

pub mod cases;
pub mod diagrams;
pub mod error;
pub mod mellinbarnes;
pub mod planequad;
pub mod rational;
pub mod report;
pub mod sov;
pub mod specfun;
pub mod symalg;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
