//! Command-line front end: configuration, run orchestration and artifact
//! writers for the `cwsbie` binary.

// Guards like `!(x > 0.0)` reject NaN on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifacts;
pub mod config;
pub mod error;
pub mod run;
pub mod validate;
