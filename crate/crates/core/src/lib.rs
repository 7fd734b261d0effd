#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod cocycle;
pub mod criterion;
pub mod error;
pub mod holonomy;
pub mod linalg;
pub mod report;
pub mod shift;
pub mod smooth;

pub use error::{Error, Result};
