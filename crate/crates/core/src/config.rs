//! TOML configuration files. Unknown keys are rejected so that typos fail loudly.

use std::path::Path;

use crate::cascade::CascadeConfig;
use crate::error::{Error, Result};

impl CascadeConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg = Self::parse_toml(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses without value validation, for callers that apply overrides
    /// before calling [`CascadeConfig::validate`]. Unknown keys still fail.
    pub fn parse_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg = Self::read(path)?;
        cfg.validate().map_err(|e| with_path(e, path))?;
        Ok(cfg)
    }

    /// [`CascadeConfig::load`] without value validation.
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_toml(&text).map_err(|e| with_path(e, path))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    }
}
