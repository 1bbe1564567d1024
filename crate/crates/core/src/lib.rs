//! Simple-cycle reservoir approximants of linear reservoir systems.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x < y)` also rejects NaN

pub mod error;
pub mod linalg;
pub mod random;
pub mod reservoir;
pub mod dilation;
pub mod cyclization;
pub mod scr_construct;
pub mod harness;
pub mod pipeline;

pub use error::{Error, Result};
