//! Adversarial machine learning posed as discrete-time optimal control.
//!
//! Victim learners are plants whose state is a model, adversarial actions are
//! control inputs, and the adversary's goals become running and terminal
//! costs. The crate provides:
//!
//! - [`control`]: generic problems, constraint sets, rollouts and objectives;
//! - [`learners`]: the batch SVM trainer and the gradient-descent learner;
//! - [`bandit`]: the UCB bandit plant;
//! - [`solvers`]: grid search, projected gradient and cross-entropy optimizers;
//! - [`attacks`]: the adversary's problems built on those plants;
//! - [`defense`]: adversarial training and margin-violation measurement;
//! - [`harness`]: the configurable experiment runner used by the CLI;
//! - [`selftest`]: the acceptance checks behind `advctl selftest`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attacks;
pub mod bandit;
pub mod control;
pub mod defense;
pub mod error;
pub mod harness;
pub mod learners;
pub mod linalg;
pub mod selftest;
pub mod solvers;

pub use error::{Error, Result};
