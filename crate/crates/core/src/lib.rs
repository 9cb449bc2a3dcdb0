//! Numerical kernels for optimal control and shape optimization of a
//! Westervelt acoustic field coupled to a Kirchhoff plate.
//!
//! The physical domain is a rectangle `[0, Lx] x [-H_fix, 0]` (the fixed part)
//! topped by a variable region whose upper boundary is the graph of a profile
//! `ell(x)`. Every computation is carried out on a fixed reference domain with
//! constant height `ell0`; the shape enters only through mapped coefficients.
//!
//! The crate is `no_std` (it needs `alloc`). Everything that touches files,
//! threads or the command line lives in the companion `aopt` crate.
//!
//! Module overview:
//!
//! * [`geometry`]: reference grid, boundary profiles, mapping coefficients.
//! * [`operators`]: sparse assembly, plate operators, fractional powers.
//! * [`forward`]: time stepping of the decoupled state system.
//! * [`adjoint`]: backward adjoint solve and boundary multipliers.
//! * [`objective`]: tracking functional, regularizers, the reduced problem.
//! * [`gradient`]: adjoint-based reduced gradients and the boundary-form shape derivative.
//! * [`optimizer`]: projected L-BFGS / gradient descent with Armijo search.
//! * [`diagnostics`]: energies, finite-difference and Taylor oracles.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod adjoint;
pub mod banded;
pub mod diagnostics;
pub mod discretization;
pub mod error;
pub mod forward;
pub mod geometry;
pub mod gradient;
pub mod linearized;
mod math;
pub mod objective;
pub mod operators;
pub mod optimizer;
pub mod params;
pub mod residual;
pub mod parallel;
pub mod sparse;
pub mod spacetime;
mod stepper;

pub use error::{Error, Result};
