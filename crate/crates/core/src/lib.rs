//! Solver and simulation harness for two-player nonzero-sum games of singular
//! stochastic control coupled to nonzero-sum games of optimal stopping on
//! one-dimensional diffusions.
//!
//! The pipeline: build the diffusion's fundamental machinery (psi, phi, S', w),
//! locate the threshold Nash equilibrium (a*, b*) of the stopping game through
//! its smooth-fit system, assemble both games' value functions through the
//! differential link V_1' = v_1, V_2' = -v_2, verify the coupled variational
//! systems on a grid, and certify the equilibrium by Monte Carlo deviation
//! testing on doubly-reflected paths.

pub mod control;
pub mod diffusion;
pub mod error;
pub mod func;
pub mod num;
pub mod pollution;
pub mod report;
pub mod sim;
pub mod stopping;

pub use error::{Error, Result};
