//! Monte Carlo solvers for parabolic PDEs of the form
//!
//! ```text
//! -v_t(t,x) + f(t, x, v, Dv, D²v) = 0,   v(T,x) = g(x)
//! ```
//!
//! built on the stochastic representation `Y_t = v(t, X_t)` of the solution
//! through a second-order backward SDE driven by the forward diffusion
//! `dX = μ(X) dt + σ(X) dW`.
//!
//! The crate covers the whole pipeline:
//!
//! - [`model`]: problem definitions, a catalog of reference problems with
//!   closed-form solutions, and numeric spot checks of the standing
//!   assumptions on the coefficients.
//! - [`expr`]: the small expression language used to write coefficients in
//!   JSON problem documents.
//! - [`paths`]: reproducible Brownian increments and Euler–Maruyama paths,
//!   with optional stopping at the boundary of a box.
//! - [`regress`]: least-squares estimators of conditional expectations.
//! - [`linear_fk`], [`bsde_semilinear`], [`bsde_full`]: the three solvers
//!   (Feynman–Kac, the `(Y, Z)` backward scheme and the `(Y, Z, Γ)` scheme).
//! - [`hjb`]: Hamilton–Jacobi–Bellman generators and feedback-control
//!   extraction.
//! - [`verify`]: independent oracles (explicit finite differences, residuals
//!   of smooth solutions, convergence-rate fits).
//! - [`run`]: the configuration-driven orchestration used by the CLI.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backward;
pub mod bsde_full;
pub mod bsde_semilinear;
pub mod error;
pub mod expr;
pub mod hjb;
pub mod linear_fk;
pub mod model;
pub mod numeric;
pub mod paths;
pub mod regress;
pub mod run;
pub mod verify;

pub use error::{Error, Result};
