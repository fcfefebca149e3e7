//! Deep One Step Malliavin BSDE solver for Bermudan option portfolios,
//! together with delta, delta-vega and delta-gamma hedging backtests and
//! PnL risk reporting.

pub mod error;
pub mod experiment;
pub mod closed_form;
pub mod contracts;
pub mod hedging;
pub mod linalg;
pub mod market;
pub mod nn;
pub mod risk;
pub mod rng;
pub mod solver;

pub use error::{Error, Result};
