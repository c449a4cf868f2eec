//! Contact process (SIS) on Galton-Watson trees, unicyclic variants and configuration-model graphs:
//! generators, a graphical-representation simulator, an exact small-graph oracle, recursion checks
//! and threshold experiments.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments, clippy::len_without_is_empty)]

pub mod cli;
pub mod distributions;
pub mod error;
pub mod exact;
pub mod graph;
pub mod recursion;
pub mod seed;
pub mod sim;
pub mod stats;
pub mod threshold;

pub use error::{Error, Result};
