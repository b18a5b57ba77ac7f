//! Decentralized optimistic gradient descent/ascent with a slow critic for
//! two-player zero-sum discounted Markov games, plus the exact solvers used
//! to measure it.

// Checks such as `!(x > 0.0)` are written that way so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimator;
pub mod experiment;
pub mod game;
pub mod gamegen;
pub mod ground_truth;
pub mod io;
pub mod learner;
pub mod matrix_game;
pub mod metrics;
pub mod plot;
pub mod projection;
pub mod sampling;

pub use error::{Error, Result};
