//! Numerical laboratory for analysis on the compact Vicsek set.
//!
//! - [`graph`]: exact level-m graph approximations with their measures.
//! - [`calculus`]: weak gradient, co-differential, Laplacian and friends.
//! - [`spectral`]: eigendecomposition, heat and Hodge semigroups.
//! - [`harness`]: numerical verification of heat kernel and Sobolev-type
//!   estimates.
//! - [`cli`]: the `vicsek` command-line driver.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod calculus;
pub mod cli;
pub mod dims;
pub mod error;
pub mod graph;
pub mod harness;
pub mod spectral;

pub use error::{Error, Result};
pub use graph::LevelGraph;
