//! Command-line orchestration of the seqgraph pipeline: stage commands,
//! versioned artifacts, run manifests and exit-code mapping.

pub mod artifact;
pub mod commands;
pub mod manifest;

use clap::Parser;
use seqgraph::error::ErrorClass;

#[derive(Parser, Debug)]
#[command(name = "seqgraph", version, about = "Sequence relation graphs, compressed, for fast inductive scoring")]
pub struct Cli {
    #[command(subcommand)]
    pub command: commands::Command,
}

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

/// Machine-readable kind and process exit code for a failed command.
pub fn classify(err: &anyhow::Error) -> (&'static str, i32) {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<seqgraph::Error>() {
            let code = match e.class() {
                ErrorClass::Usage => EXIT_USAGE,
                ErrorClass::Data => EXIT_DATA,
                ErrorClass::Numeric => EXIT_NUMERIC,
            };
            return (e.kind(), code);
        }
        if cause.is::<std::io::Error>() {
            return ("io", EXIT_DATA);
        }
        if cause.is::<serde_json::Error>() {
            return ("json", EXIT_DATA);
        }
    }
    ("data", EXIT_DATA)
}
