//! Engine configuration: one TOML file carrying every tunable.
//!
//! The shipped `config/default.toml` is embedded in the binary and is what
//! [`EngineConfig::default`] returns, so the defaults are the calibrated
//! reproduction.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::AnalysisSettings;
use crate::mandate::MandatePolicy;
use crate::sim::{SimConfig, SimError};
use crate::triage::TriageParams;
use crate::verification::VerificationPolicy;

pub const DEFAULT_CONFIG_TOML: &str = include_str!("../config/default.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    pub output_dir: String,
    pub mandate: MandatePolicy,
    pub triage: TriageParams,
    pub verification: VerificationPolicy,
    pub analysis: AnalysisSettings,
    pub simulation: SimConfig,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl From<SimError> for ConfigError {
    fn from(e: SimError) -> Self {
        ConfigError::Invalid(e.to_string())
    }
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig::from_toml_str(DEFAULT_CONFIG_TOML).expect("shipped default config is valid")
    }
}

impl EngineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let config: EngineConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.mandate
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.verification
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !(0.0..=1.0).contains(&self.triage.probe_threshold) {
            return Err(ConfigError::Invalid(format!(
                "triage.probe_threshold = {} is outside [0, 1]",
                self.triage.probe_threshold
            )));
        }
        self.analysis
            .validate()
            .map_err(ConfigError::Invalid)?;
        self.simulation.validate()?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding, hex encoded.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes to JSON");
        hex::encode(Sha256::digest(&canonical))
    }
}

impl From<ConfigError> for SimError {
    fn from(e: ConfigError) -> Self {
        SimError::Config(e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_parses_and_round_trips() {
        let config = EngineConfig::default();
        let again = EngineConfig::from_toml_str(&config.to_toml_string()).unwrap();
        assert_eq!(config, again);
        assert_eq!(config.hash(), again.hash());
        assert_eq!(config.simulation.n_reports, 240);
        assert_eq!(config.mandate.tau_n, 8.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("bogus = 1\n{DEFAULT_CONFIG_TOML}");
        assert!(matches!(
            EngineConfig::from_toml_str(&text),
            Err(ConfigError::Parse(_))
        ));
    }

    #[test]
    fn mismatched_counts_are_invalid() {
        let text = DEFAULT_CONFIG_TOML.replace("n_reports = 240", "n_reports = 200");
        assert!(matches!(
            EngineConfig::from_toml_str(&text),
            Err(ConfigError::Invalid(_))
        ));
    }
}
