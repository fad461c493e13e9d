use std::path::Path;

use anyhow::Context;
use serde::de::DeserializeOwned;

use super::{Failure, UsageExt};

/// Flat `key = value` settings. Keys not used by a command are ignored.
#[derive(Debug, Default)]
pub struct ConfigFile {
    table: toml::Table,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))
            .usage()?;
        let table: toml::Table = text
            .parse()
            .with_context(|| format!("parsing config {}", path.display()))
            .usage()?;
        if let Some((key, _)) = table.iter().find(|(_, v)| v.is_table() || v.is_array()) {
            return Err(super::usage_error(format!(
                "config key `{key}`: only flat scalar values are supported"
            )));
        }
        Ok(Self { table })
    }

    pub fn get<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>, Failure> {
        match self.table.get(key) {
            None => Ok(None),
            Some(v) => v
                .clone()
                .try_into()
                .map(Some)
                .with_context(|| format!("config key `{key}` has the wrong type"))
                .usage(),
        }
    }

    /// flag > config > nothing
    pub fn pick<T: DeserializeOwned>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, Failure> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.get(key),
        }
    }

    /// flag > config > default
    pub fn pick_or<T: DeserializeOwned>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, Failure> {
        Ok(self.pick(flag, key)?.unwrap_or(default))
    }

    /// flag > config, or a usage error naming the missing flag.
    pub fn require<T: DeserializeOwned>(&self, flag: Option<T>, key: &str) -> Result<T, Failure> {
        self.pick(flag, key)?
            .ok_or_else(|| super::usage_error(format!("missing required --{}", key.replace('_', "-"))))
    }
}
