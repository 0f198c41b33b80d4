//! Parametric distributionally robust optimization.
//!
//! A parametric model is fitted to samples, discretized by Monte Carlo, and a
//! decision is chosen against the worst case over a divergence ball around
//! the fitted model. The crate also ships the estimators, inner and outer
//! solvers, a synthetic benchmark harness, and the `pdro` command line tool.

pub mod bench;
pub mod cli;
pub mod cost;
pub mod dist;
pub mod dro;
pub mod error;
pub mod linalg;
pub mod rng;

pub use error::{Error, Result};
pub use nalgebra;
