//! Adversarial training as a two-player game between a defense network and a
//! trainable, norm-constrained attack network, plus the continuous-time
//! machinery the game is approximating: projected gradient flow on lp balls
//! with KKT termination certificates, and the PGD/FGSM discretizations.
//!
//! The crate is organized around the players and the referee:
//!
//! - [`nn`], [`adam`]: a minimal dense feed-forward engine with reverse-mode
//!   gradients and first-order optimizers.
//! - [`models`]: the defense net and the constrained perturbation generator.
//! - [`losses`]: cross-entropy / MSE and the adversarial game objective.
//! - [`attacks`]: exact lp-ball projections, FGSM and multi-restart PGD.
//! - [`flow`]: projected-gradient-flow integration, saddle handling, KKT
//!   reports and closed-form attacks for linear/logistic models.
//! - [`data`]: synthetic 2D classification families, regression CSV loading,
//!   unit-cube normalization and deterministic splits.
//! - [`training`]: the alternating game loop, the PGD-trained baseline and
//!   clean training, all seed-deterministic.
//! - [`eval`]: defense-by-attack evaluation matrices and grid field exports.
//! - [`config`], [`pipeline`]: declarative run configuration and the
//!   end-to-end reproduction pipeline behind the CLI.

// Index-style loops mirror the math throughout; `!(x > 0.0)` deliberately
// treats NaN as invalid.
#![allow(clippy::needless_range_loop)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::type_complexity)]

pub mod adam;
pub mod attacks;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod flow;
pub mod landscape;
pub mod losses;
pub mod models;
pub mod nn;
pub mod pipeline;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
