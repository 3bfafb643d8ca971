//! Configuration, orchestration and file output for the `qrd` command.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod output;
pub mod run;
pub mod setup;

pub use config::{emit, parse_config, parse_str, RunConfig};
pub use run::{Context, Failure};
