//! Library half of the `secan` command-line tool: configuration schema,
//! CSV ingestion, report structures, and the subcommand implementations.
//! The binary in `main.rs` is a thin argument-parsing shell over this.

pub mod commands;
pub mod config;
pub mod ingest;
pub mod report;
pub mod table;
