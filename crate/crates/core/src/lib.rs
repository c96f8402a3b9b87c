#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifacts;
pub mod diagnostics;
pub mod error;
pub mod ingest;
pub mod loo;
pub mod mathkernels;
pub mod model;
pub mod predict;
pub mod sampler;
pub mod simulate;

pub use error::{Error, Result};
