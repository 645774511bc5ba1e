//! Higher-order orthogonal score functions for average treatment effect
//! estimation.
//!
//! The crate is `no_std` (it needs `alloc`) and holds every numerical piece of
//! the pipeline:
//!
//! * [`score`]: residual moments, the coefficients of the correction term
//!   `A(D, Z; a)`, the score itself, and a dense-solve oracle for the
//!   coefficients.
//! * [`orthogonality`]: a Monte-Carlo Gateaux-derivative checker for the
//!   orthogonality conditions of a score.
//! * [`nuisance`]: Lasso, multinomial logistic regression and random forests
//!   used to fit the outcome regressions and propensity scores.
//! * [`estimators`]: the DR, DML and higher-order estimators, sample splits,
//!   moment estimation and the relative ATE error metric.
//! * [`simulation`]: the softmax/quadratic data-generating process and the
//!   sweep harness built on it.
//!
//! File formats, configuration and the command line live in the
//! `orthate-cli` crate.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod error;
pub mod estimators;
pub mod nuisance;
pub mod numeric;
pub mod orthogonality;
pub mod rng;
pub mod score;
pub mod simulation;

pub use error::{Error, Result};
