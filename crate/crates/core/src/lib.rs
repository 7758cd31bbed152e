//! Agent-based simulation of an epidemic spreading through a multi-location
//! economy, with tools to search for resilient supply-chain configurations and
//! learn a surrogate that recommends a profit/resilience trade-off per firm.

pub mod economy;
pub mod epidemic;
pub mod error;
pub mod experiments;
pub mod money;
pub mod parallel;
pub mod rng;
pub mod scenario;
pub mod simulate;
pub mod stats;
pub mod strategy;
pub mod surrogate;
pub mod world;
pub mod worldgen;

pub use error::{Error, Result};
pub use scenario::ScenarioSpec;
pub use world::World;
