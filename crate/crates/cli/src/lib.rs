//! Library side of the `ergode` command: chain-file loading, command
//! implementations and report rendering.

pub mod commands;
pub mod input;
pub mod report;
