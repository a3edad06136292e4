//! File formats, configuration, run directories, benchmarks and the command
//! bodies of the `merdg` binary.

// `!(x < tol)` guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod bundle;
pub mod commands;
pub mod config;
pub mod error;
pub mod format;
pub mod gradcheck;
pub mod run;

pub use error::{LabError, Result};
