//! Sobolev temporal-difference learning on differentiable environments.
//!
//! A critic `Q_phi(s, a)` is trained to match first-order Bellman targets in
//! both value and input gradient: the loss is
//!
//! ```text
//! L(phi) = E[ (Q - y)^2
//!           + lambda_s * ||grad_s Q - dy_ds||^2
//!           + lambda_a * ||grad_a Q - dy_da||^2 ]
//! ```
//!
//! where `y = r + gamma * Q_targ(s', a')` and `(dy_ds, dy_da)` differentiate
//! the backup through the environment's dynamics and reward Jacobians.
//!
//! Module map:
//! - [`diff`]: forward-mode input tangents plus a reverse-mode parameter tape
//!   (forward-over-reverse; no second-order terms are ever formed).
//! - [`env`]: differentiable environments exposing `(f, r)` and their
//!   Jacobians -- a bounded 1-D task and a linear-quadratic regulator.
//! - [`oracle`]: ground truth -- grid value iteration and a Riccati solver.
//! - [`critic`]: quadratic and MLP critics, plus a linear actor.
//! - [`target`]: first-order Bellman targets (grid-argmax and actor forms).
//! - [`train`]: Adam, Polyak averaging, replay, and the training loops.
//! - [`eval`]: accuracy metrics against the oracles and seed aggregation.
//! - [`persist`]: versioned flat-text serialization for solutions and params.
//! - [`testkit`]: test-only helpers (a tabulated oracle-backed critic).

pub mod critic;
pub mod diff;
pub mod env;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod oracle;
pub mod persist;
pub mod target;
pub mod testkit;
pub mod train;

pub use error::{Error, Result};
