//! Command-line front end for sparse delay-model identification.

pub mod cli;
pub mod commands;
pub mod config;
pub mod model_file;
pub mod output;
