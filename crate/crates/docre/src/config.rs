//! Plain-text `key=value` configuration files. Every key has a default;
//! unknown keys are an error so typos never silently fall back.

use std::collections::BTreeMap;
use std::path::Path;

use crate::{Error, Result};

/// A parsed config file: keys are consumed as typed values and whatever
/// remains at the end is reported as unknown.
#[derive(Debug, Clone, Default)]
pub struct KvConfig {
    entries: BTreeMap<String, String>,
}

impl KvConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value, got {line:?}", lineno + 1))
            })?;
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
            }
            entries.insert(key, value.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::parse(&text)
    }

    /// Overrides or inserts a key, as a CLI flag would.
    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn take_raw(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    pub fn take<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        match self.entries.remove(key) {
            None => Ok(default),
            Some(raw) => raw
                .parse()
                .map_err(|_| Error::Config(format!("key {key}: cannot parse {raw:?}"))),
        }
    }

    pub fn take_bool(&mut self, key: &str, default: bool) -> Result<bool> {
        match self.entries.remove(key) {
            None => Ok(default),
            Some(raw) => match raw.as_str() {
                "true" | "on" | "1" | "yes" => Ok(true),
                "false" | "off" | "0" | "no" => Ok(false),
                other => Err(Error::Config(format!("key {key}: expected bool, got {other:?}"))),
            },
        }
    }

    /// Fails if any key was never consumed.
    pub fn finish(self) -> Result<()> {
        if self.entries.is_empty() {
            Ok(())
        } else {
            let keys: Vec<_> = self.entries.keys().cloned().collect();
            Err(Error::Config(format!("unknown keys: {}", keys.join(", "))))
        }
    }

    /// Snapshot of the remaining raw entries (used by manifests before
    /// consumption starts).
    pub fn raw_entries(&self) -> &BTreeMap<String, String> {
        &self.entries
    }
}
