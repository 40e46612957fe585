//! Command-line front end: argument parsing, method dispatch and the
//! `coreset.json` / report formats.

pub mod commands;
pub mod methods;
pub mod output;

pub use commands::{exit_code, run, Cli};
pub use methods::{Method, MethodParams};
pub use output::CoresetFile;
