//! Deterministic simulator for blockchain-coordinated robust multi-agent
//! UCB bandits.

use serde::{Deserialize, Serialize};

pub mod aggregate;
pub mod config;
pub mod consensus;
pub mod contract;
pub mod crypto;
pub mod env;
pub mod mpc;
pub mod policy;
pub mod error;
pub mod metrics;
pub mod preset;
pub mod rng;
pub mod runner;
pub mod select;
pub mod sim;

pub use config::{load_scenario, LoadedScenario, ScenarioConfig, ScenarioDoc};
pub use error::{ConfigError, Error, InvariantBreach};
pub use preset::Preset;

/// Index of a participant in `0..M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParticipantId(pub u32);

impl std::fmt::Display for ParticipantId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}
