//! Library surface of the CLI so integration tests can drive parsing and
//! dispatch without spawning processes.

pub mod cli;
pub mod config;
pub mod run;
