//! Numerical laboratory for the defocusing equation
//! `i u_t + Δu = |u|^{p-1} u` on the exterior of the unit ball with Dirichlet
//! data on the unit sphere.
//!
//! The crate is organized bottom-up:
//!
//! - [`domain`]: parameters, the truncated radial grid, field storage;
//! - [`operators`]: discrete Dirichlet Laplacian, Crank–Nicolson / Strang
//!   stepping, the frozen-coefficient stepper for the difference equation;
//! - [`functionals`]: mass, energy, Strauss quotient, pseudoconformal energy,
//!   Sobolev and space-time norms;
//! - [`compatibility`]: linear and nonlinear compatibility sequences;
//! - [`pseudoconformal`]: the pseudoconformal chart and its cone energy;
//! - [`experiments`]: manifests, scenarios, fits and output files.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod compatibility;
pub mod domain;
pub mod error;
pub mod experiments;
pub mod functionals;
pub mod operators;
pub mod pseudoconformal;

pub use error::{Error, Result};
