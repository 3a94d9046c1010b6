//! Command-line front end and local HTTP server for `didgraph`.

pub mod commands;
pub mod ops;
pub mod server;

pub use commands::run;
