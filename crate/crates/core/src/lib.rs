//! Green's-function and response algebra of the driven quantum harmonic
//! oscillator and free bosonic fields, with a truncated-Fock-space oracle
//! that every identity is checked against.

pub mod driven;
pub mod error;
pub mod fock;
pub mod functional;
pub mod io;
pub mod kernels;
pub mod spectral;
pub mod suite;
pub mod wick;

pub use error::{Error, Result};
pub use num_complex::Complex64;
