//! Cascaded channel estimation for reflecting-surface assisted MIMO links.
//!
//! A passive reflecting surface sits between a multi-antenna transmitter and a
//! multi-antenna receiver. Neither of the two channel legs — transmitter to
//! surface (`H`) and surface to receiver (`G`) — can be observed directly,
//! because the surface itself has no signal processing capability. This crate
//! estimates both legs from pilot observations `Y = G (S ⊙ (H X)) + W`, where
//! `S` is the known on/off pattern of the surface elements and `X` the known
//! transmit pilots.
//!
//! The estimator (`jbf-mc`) runs in two stages:
//!
//! 1. [`bigamp`] — bilinear generalized approximate message passing factorizes
//!    `Y ≈ G Z` with a Bernoulli-Gaussian prior on the sparse matrix
//!    `Z = S ⊙ (H X)`, recovering `G` and the observed entries of `H X`.
//! 2. [`completion`] — Riemannian-gradient matrix completion (`RGrad`) fills
//!    the masked entries of `Z` using the low-rank structure of `H`, after
//!    which `H` is recovered through a pilot pseudo-inverse. Iterative hard-
//!    and soft-thresholding baselines (`jbf-iht`, `jbf-ist`) are included.
//!
//! Both factors are only identifiable up to a diagonal scaling; [`eval`]
//! removes that ambiguity against ground truth before computing NMSE metrics,
//! and [`harness`] drives seeded Monte-Carlo sweeps over SNR, pilot length and
//! sparsity level, producing CSV tables and SVG plots.
//!
//! See the `examples/` directory for one runnable program per capability, and
//! the `jbfmc` binary for the `trial` / `sweep` / `selftest` command line.

pub mod bigamp;
pub mod completion;
pub mod error;
pub mod eval;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod seeding;

pub use error::{Error, Result};
pub use linalg::{CMat, CVec, RMat};
