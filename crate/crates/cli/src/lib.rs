//! Library half of the `gazeclass` command: offline analyses and scenario
//! script loading, kept here so they can be tested without the binary.

pub mod analyze;
pub mod script;
