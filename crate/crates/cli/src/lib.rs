// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Pipeline commands behind the `autoset` binary.

pub mod commands;
pub mod config;
pub mod error;

pub use config::RunConfig;
pub use error::{CliError, Result};
