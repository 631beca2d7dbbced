//! JSON configuration files: source declarations and manager settings.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::manager::{ManagerConfig, Weights};

/// One event source. Every event type is produced by exactly one source of
/// the same name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub name: String,
    /// Declared mean gap between two arrivals, in seconds.
    #[serde(default)]
    pub estimated_inter_arrival_seconds: Option<f64>,
}

impl SourceConfig {
    pub fn new(name: impl Into<String>, gap_secs: f64) -> Self {
        SourceConfig {
            name: name.into(),
            estimated_inter_arrival_seconds: Some(gap_secs),
        }
    }
}

pub fn load_sources(path: &Path) -> Result<Vec<SourceConfig>> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// Partial manager settings; unset fields fall back to the enclosing level.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ManagerOverrides {
    pub weights: Option<Weights>,
    pub theta_multiplier: Option<f64>,
    pub slack_ratio_threshold: Option<f64>,
    pub correction: Option<bool>,
}

impl ManagerOverrides {
    pub fn apply(&self, base: &ManagerConfig) -> ManagerConfig {
        ManagerConfig {
            weights: self.weights.unwrap_or(base.weights),
            theta_multiplier: self.theta_multiplier.unwrap_or(base.theta_multiplier),
            slack_ratio_threshold: self
                .slack_ratio_threshold
                .unwrap_or(base.slack_ratio_threshold),
            correction: self.correction.unwrap_or(base.correction),
        }
    }
}

/// Manager config file: global settings plus per-pattern overrides keyed by
/// pattern id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ManagerFile {
    #[serde(flatten)]
    pub global: ManagerOverrides,
    #[serde(default)]
    pub patterns: BTreeMap<String, ManagerOverrides>,
}

impl ManagerFile {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn resolve(
        &self,
        base: &ManagerConfig,
    ) -> (ManagerConfig, BTreeMap<String, ManagerConfig>) {
        let global = self.global.apply(base);
        let per = self
            .patterns
            .iter()
            .map(|(id, o)| (id.clone(), o.apply(&global)))
            .collect();
        (global, per)
    }
}
