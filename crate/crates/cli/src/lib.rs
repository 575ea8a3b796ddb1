//! Command line and HTTP front end for `reflow-core`.

pub mod cli;
pub mod server;
