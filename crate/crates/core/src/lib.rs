//! Optimal control of Caputo fractional systems: motions as Volterra
//! equations, order-α sensitivities of the value functional, and positional
//! feedback synthesis.

// `!(x > y)` comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod cli;
pub mod config;
pub mod dynamics;
pub mod envelope;
pub mod error;
pub mod example;
pub mod feedback;
pub mod fractional;
pub mod problem;
pub mod relaxed;
pub mod sensitivity;
pub mod special;
pub mod volterra;

pub use error::{Error, Result};
