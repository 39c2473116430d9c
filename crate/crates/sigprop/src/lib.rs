//! File formats, configuration and command implementations for the
//! `sigprop` tool. The numerics live in `sigprop-core`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod idx;
pub mod io;
pub mod report;

pub use config::{Overrides, RunConfig};
pub use error::{Error, Result};
