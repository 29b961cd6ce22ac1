//! Stochastic gradient descent and stochastic heavy ball under gradient
//! domination.
//!
//! The crate is organised bottom-up: step-size [`schedules`], a stochastic
//! first-order [`oracle`], test [`objectives`], the [`optimizers`] and their
//! trajectory driver, the deterministic [`envelope`] recursion, empirical
//! [`rate`] estimation, the local trapping analysis in [`local`], and the
//! tabular softmax policy-gradient application in [`rl`].

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod envelope;
pub mod error;
pub mod local;
pub mod objectives;
pub mod optimizers;
pub mod oracle;
pub mod rate;
pub mod rl;
pub mod rng;
pub mod schedules;

pub use error::{Error, Result};
