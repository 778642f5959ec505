//! Config-driven command-line tasks.

pub mod commands;
pub mod config;
pub mod record;

pub use commands::{run, RunContext};
pub use config::{RunConfig, Task};
pub use record::ResultRecord;
