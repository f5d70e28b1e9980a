//! Sensing-hole detection and recovery for clustered wireless sensor fields.

pub mod cluster;
pub mod config;
pub mod coverage;
pub mod energy;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod protocol;
pub mod relocation;
pub mod ssoa;
pub mod world;

pub use config::Config;
pub use engine::{run_scenario, Protocol, ScenarioMetrics, Simulation};
pub use error::{Error, Result};
