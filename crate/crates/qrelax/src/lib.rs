//! Exact coordinate descent for convex quadratics and their
//! rescaling-invariant relaxation.
//!
//! The library provides:
//! - [`operators`]: SPSD operators behind a uniform column-access interface;
//! - [`quadratic`]: the objective D(x) = x'Qx - 2c'x + c'Q^+c with exact
//!   coordinate line search and greatest-improvement selection;
//! - [`relaxed`]: the rescaling-invariant relaxation R, its exact line
//!   search, per-direction improvements and acceleration factors;
//! - [`solvers`]: the five benchmark methods with exact column-call
//!   accounting and deterministic traces;
//! - [`diagnostics`]: convergence-rate constants and trace checks;
//! - [`generators`]: seeded experiment families;
//! - [`mmio`]: Matrix Market I/O for symmetric operators.
//!
//! With the default `parallel` feature, batch generation has data-parallel
//! twins (`*_par`); results are bit-identical to the sequential paths.

pub mod diagnostics;
pub mod error;
pub mod generators;
pub mod mmio;
pub mod operators;
pub mod pick;
pub mod quadratic;
pub mod relaxed;
pub mod solvers;

pub use error::{Error, Result};

// Hessians come back as dense matrices; re-export the linear-algebra crate so
// callers can decompose them without pinning their own copy.
pub use nalgebra;
