//! Numerical laboratory for multi-soliton solutions of nonlinear Schrödinger
//! equations driven by conservative multiplicative noise.

pub mod diagnostics;
pub mod error;
pub mod evolution;
pub mod fit;
pub mod ground_state;
pub mod harness;
pub mod jet;
pub mod modulation;
pub mod noise;
pub mod rough;
pub mod soliton;
pub mod spectral;

pub use error::{Error, Result};
pub use num_complex::Complex64;
