//! Plain-text `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Every key must be
//! consumed by the reader; leftovers are reported as unknown keys.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected key=value")]
    Syntax { line: usize },
    #[error("line {line}: duplicate key {key}")]
    Duplicate { line: usize, key: String },
    #[error("unknown key {0}")]
    UnknownKey(String),
    #[error("key {key}: {message}")]
    BadValue { key: String, message: String },
}

/// Parsed key/value pairs awaiting typed extraction.
#[derive(Debug, Clone, Default)]
pub struct KvConfig {
    entries: BTreeMap<String, (usize, String)>,
}

impl KvConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            let key = k.trim().to_string();
            if key.is_empty() {
                return Err(ConfigError::Syntax { line: i + 1 });
            }
            if entries.insert(key.clone(), (i + 1, v.trim().to_string())).is_some() {
                return Err(ConfigError::Duplicate { line: i + 1, key });
            }
        }
        Ok(Self { entries })
    }

    /// Removes `key` and parses it, leaving `target` alone when absent.
    pub fn take<T: FromStr>(&mut self, key: &str, target: &mut T) -> Result<(), ConfigError>
    where
        T::Err: Display,
    {
        if let Some((_, v)) = self.entries.remove(key) {
            *target = v.parse().map_err(|e: T::Err| ConfigError::BadValue { key: key.into(), message: e.to_string() })?;
        }
        Ok(())
    }

    /// Comma-separated list of numbers.
    pub fn take_list(&mut self, key: &str, target: &mut Vec<f64>) -> Result<(), ConfigError> {
        if let Some((_, v)) = self.entries.remove(key) {
            *target = v
                .split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|e| ConfigError::BadValue { key: key.into(), message: e.to_string() }))
                .collect::<Result<_, _>>()?;
        }
        Ok(())
    }

    /// Errors on the first key nobody asked for.
    pub fn finish(self) -> Result<(), ConfigError> {
        match self.entries.into_iter().min_by_key(|(_, (line, _))| *line) {
            Some((k, _)) => Err(ConfigError::UnknownKey(k)),
            None => Ok(()),
        }
    }
}
