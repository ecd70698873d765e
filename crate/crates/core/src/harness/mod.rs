//! Training, evaluation, checkpointing and the command-line front end.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod evaluate;
pub mod metrics;
pub mod train;
pub mod verify;
