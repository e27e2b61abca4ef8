//! Subcommands and the bias experiments behind the `rlvs` binary.

pub mod commands;
pub mod experiments;
pub mod pipeline;
pub mod report;

pub use report::{Cmp, ExperimentReport, Threshold, Verdict};
