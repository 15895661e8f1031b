// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod checkpoint;
pub mod dataio;
pub mod error;
pub mod inference;
pub mod metrics;
pub mod network;
pub mod synthgen;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
