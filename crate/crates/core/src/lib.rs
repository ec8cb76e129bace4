//! Goodness-of-fit backtesting of interest-rate scenario generators.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod backtest;
pub mod critical;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod figures;
pub mod fixture;
pub mod gof;
pub mod output;
pub mod quadrature;
pub mod ratesim;
pub mod rng;
pub mod svg;

pub use error::{Error, Result};
