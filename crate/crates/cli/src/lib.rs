//! Scenario files, CSV trace serialization, plot-script generation and the
//! command implementations behind the `flatin` binary.

pub mod commands;
pub mod plot;
pub mod scenario;
pub mod trace_io;

pub use commands::CliError;
