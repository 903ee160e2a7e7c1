//! Library side of the `sica` command: config loading, run directories and
//! manifests, and the train / eval / ablate / plot / oracle subcommands.

pub mod commands;
pub mod config;
pub mod manifest;
pub mod plot;
