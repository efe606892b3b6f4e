use thiserror::Error;

/// Problems with a scenario document or its resolved values.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("failed to read {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("malformed scenario document: {0}")]
    Parse(String),
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
    #[error("scenario violates the {preset} regime: {reason}")]
    Regime { preset: String, reason: String },
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
}

impl ConfigError {
    pub fn invalid(key: &'static str, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            key,
            reason: reason.into(),
        }
    }
}

/// A protocol invariant that must hold on every honest execution was broken.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum InvariantBreach {
    #[error("honest participant {participant} at step {t} holds an estimate outside [0, 1]: {value}")]
    EstimateOutOfRange { t: u64, participant: u32, value: f64 },
    #[error("block {index} does not link to its predecessor")]
    BrokenLink { index: u64 },
    #[error("replayed pull counts disagree with the live counts at step {t}")]
    ReplayMismatch { t: u64 },
    #[error("approved estimate at step {t} has an infinite entry under distance-based cost")]
    InfiniteEstimate { t: u64 },
    #[error("negative cost {cost} at step {t}")]
    NegativeCost { t: u64, cost: f64 },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Invariant(#[from] InvariantBreach),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
