//! Experiment harness for the `actlearn` engine: strict configuration,
//! dataset plumbing, training runs with machine-readable artifacts, the
//! property-verification suite, linear-readout evaluation, and feature
//! visualization. The `actlearn` binary in this crate is a thin CLI over
//! these modules.

pub mod config;
pub mod datasets;
pub mod experiments;
pub mod features;
pub mod images;
pub mod properties;
pub mod readout;
pub mod report;
