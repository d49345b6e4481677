//! Scenario-driven front end for the pricing library: TOML configuration,
//! JSON/CSV report files, and a worker-count-independent parallel
//! simulation driver.

pub mod config;
pub mod error;
pub mod parallel;
pub mod report;
pub mod runner;

pub use config::ScenarioConfig;
pub use error::{CliError, Result};
pub use runner::{run, Command, Outcome, Overrides};
