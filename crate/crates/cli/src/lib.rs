//! Experiment harness for the `ioscen` estimators: mismatch curves, the
//! tail-identity table, online regret and the two-state example checks.

pub mod config;
pub mod example1;
pub mod experiments;
pub mod output;
