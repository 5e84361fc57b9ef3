//! Chained low-rank updates for matrix-shaped optimization problems.
//!
//! The core method maintains a full-parameter iterate `W` and repeatedly
//! applies a low-rank correction: sample a random sketch, solve the restricted
//! subproblem in the trainable factor, merge the product back into `W`, and
//! resample. With a single exact gradient step per block the merged update is
//! a projected gradient step `W - gamma * H * grad f(W)` where `H` is the
//! orthogonal projector onto the sketch's column space, which is what makes
//! the chain analyzable: descent holds per step and convex/PL rates follow
//! from the spectrum of `E[H]`.
//!
//! The crate provides:
//! - sketch sampling and projector construction ([`sketch`]),
//! - convex test objectives with known constants ([`objectives`]),
//! - the chained low-rank optimizer with GD / random-reshuffling / SGD inner
//!   solvers plus joint-factor LoRA-style baselines ([`optimizers`]),
//! - a federated variant with cohort sampling and factor averaging
//!   ([`federated`]),
//! - experiment plumbing: synthetic data, trace files, summaries
//!   ([`harness`]).
//!
//! Start with the runnable examples (`cargo run --release --example
//! counterexample`) or the `raclora` binary.

pub mod error;
pub mod federated;
pub mod harness;
pub mod linalg;
pub mod objectives;
pub mod optimizers;
pub mod rng;
pub mod sketch;

pub use error::{Error, Result};
