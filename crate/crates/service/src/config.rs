use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use proxtrace_core::platform::{PlatformConfig, Thresholds};
use proxtrace_core::lockdown::Region;
use serde::{Deserialize, Serialize};

use crate::ServiceError;

/// Service configuration, usually read from a TOML file.
///
/// ```toml
/// bind = "127.0.0.1:8080"
/// data_dir = "data"
///
/// [thresholds]
/// proximity_m = 5.0
/// aeo_threshold = 10
/// window_days = 14
/// tick_seconds = 5
///
/// [[regions]]
/// region_id = "denver"
/// name = "Denver, CO"
/// k = 3
/// bounding_box = { min_lat = 39.7342, min_lon = -104.9953, max_lat = 39.7442, max_lon = -104.9853 }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    #[serde(default = "default_bind")]
    pub bind: SocketAddr,
    pub data_dir: PathBuf,
    #[serde(default)]
    pub regions: Vec<Region>,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub id_salt: String,
    /// Cached assessments older than this are recomputed; also the periodic assessment period.
    #[serde(default = "default_interval")]
    pub assessment_interval_secs: u64,
    #[serde(default = "default_window")]
    pub assessment_window_secs: i64,
    /// fsync the log after every entry.
    #[serde(default)]
    pub sync_writes: bool,
}

fn default_bind() -> SocketAddr {
    "127.0.0.1:8080".parse().expect("valid literal")
}

fn default_interval() -> u64 {
    60
}

fn default_window() -> i64 {
    24 * 3600
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>, regions: Vec<Region>) -> Self {
        Self {
            bind: default_bind(),
            data_dir: data_dir.into(),
            regions,
            thresholds: Thresholds::default(),
            id_salt: String::new(),
            assessment_interval_secs: default_interval(),
            assessment_window_secs: default_window(),
            sync_writes: false,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ServiceError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        let mut config: ServiceConfig = toml::from_str(&text)
            .map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        if config.data_dir.is_relative() {
            if let Some(parent) = path.parent() {
                config.data_dir = parent.join(&config.data_dir);
            }
        }
        Ok(config)
    }

    pub fn platform_config(&self) -> PlatformConfig {
        PlatformConfig {
            regions: self.regions.clone(),
            thresholds: self.thresholds,
            id_salt: self.id_salt.clone(),
            assessment_window_secs: self.assessment_window_secs,
        }
    }

    pub fn log_path(&self) -> PathBuf {
        self.data_dir.join("events.jsonl")
    }
}
