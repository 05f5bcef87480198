// `!(x > 0.0)` style checks are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod data;
pub mod error;
pub mod features;
pub mod losses;
pub mod model;
pub mod scoring;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
