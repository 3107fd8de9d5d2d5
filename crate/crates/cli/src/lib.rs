//! Library surface of the experiment driver, used by the binary and the
//! acceptance suite.

pub mod config;
pub mod experiments;
pub mod out;
pub mod report;
