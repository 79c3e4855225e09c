//! Service configuration file.
//!
//! TOML with top-level keys `port`, `city_table_path`, `log_path`, `clock`,
//! an optional `telemetry_port`, a `[thresholds]` table and `[[sinks]]`
//! entries. Relative paths resolve against the config file's directory.

use std::path::{Path, PathBuf};

use ets_core::engine::Thresholds;
use ets_core::notify::SinkConfig;
use serde::{Deserialize, Serialize};

use crate::error::StartupError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClockMode {
    /// Real time sampled into the logical clock at 10 Hz.
    #[default]
    Wall,
    /// Time advances only with replayed trace timestamps.
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    pub port: u16,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub sinks: Vec<SinkConfig>,
    /// Empty means the bundled table.
    #[serde(default)]
    pub city_table_path: String,
    pub log_path: String,
    #[serde(default)]
    pub clock: ClockMode,
    #[serde(default)]
    pub telemetry_port: Option<u16>,
}

impl ServiceConfig {
    pub fn new(port: u16, log_path: impl Into<String>) -> Self {
        Self {
            port,
            thresholds: Thresholds::default(),
            sinks: Vec::new(),
            city_table_path: String::new(),
            log_path: log_path.into(),
            clock: ClockMode::Wall,
            telemetry_port: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self, StartupError> {
        let text = std::fs::read_to_string(path).map_err(|e| StartupError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| StartupError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.city_table_path = resolve(base, &cfg.city_table_path);
        cfg.log_path = resolve(base, &cfg.log_path);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), StartupError> {
        if self.port == 0 {
            return Err(StartupError::Invalid("port must be in 1..=65535".into()));
        }
        if self.telemetry_port == Some(0) {
            return Err(StartupError::Invalid("telemetry_port must be in 1..=65535".into()));
        }
        self.thresholds
            .validate()
            .map_err(|e| StartupError::Invalid(e.to_string()))?;
        for (i, s) in self.sinks.iter().enumerate() {
            s.validate()
                .map_err(|e| StartupError::Invalid(format!("sinks[{i}] ({}): {e}", s.kind)))?;
        }
        if !self.city_table_path.is_empty() && !Path::new(&self.city_table_path).is_file() {
            return Err(StartupError::MissingFile(PathBuf::from(&self.city_table_path)));
        }
        if self.log_path.is_empty() {
            return Err(StartupError::Invalid("log_path must be set".into()));
        }
        let log_dir = Path::new(&self.log_path).parent().filter(|p| !p.as_os_str().is_empty());
        if let Some(dir) = log_dir {
            if !dir.is_dir() {
                return Err(StartupError::MissingFile(dir.to_path_buf()));
            }
        }
        Ok(())
    }
}

fn resolve(base: &Path, p: &str) -> String {
    if p.is_empty() || Path::new(p).is_absolute() {
        p.to_string()
    } else {
        base.join(p).to_string_lossy().into_owned()
    }
}
