//! The `riskcore` command line and its HTTP/JSON service.

pub mod commands;
pub mod http;

pub use commands::{dispatch, exit_code, Cli, CommandResult, Format};
