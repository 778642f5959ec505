//! Analytic continuation of the transfer function of a 2×2 operator-matrix Hamiltonian
//! through its continuous spectrum, and the non-selfadjoint operator roots whose
//! eigenvalues are the resonances.

pub mod cli;
pub mod contour;
pub mod error;
pub mod linalg;
pub mod model;
pub mod quadrature;
pub mod rootsolve;
pub mod spectral;
pub mod transfer;
pub mod verify;

pub use num_complex::Complex64 as C64;

pub use error::{Error, Result};
