//! Pipeline orchestration for the `unlearn` command.

pub mod commands;
pub mod pipeline;
