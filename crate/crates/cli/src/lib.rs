//! Library side of the `nsquant` command-line tool: CSV ingestion,
//! deseasonalization, config handling and the command pipelines.

pub mod commands;
pub mod config;
pub mod deseason;
pub mod io;
