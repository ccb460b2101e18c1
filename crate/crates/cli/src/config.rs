//! Flat `key = value` config files layered under command-line flags.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::CliError;

/// Values from a config file plus the record of what each run resolved to.
#[derive(Debug, Default)]
pub struct Layers {
    file: BTreeMap<String, String>,
    used: BTreeSet<String>,
    resolved: Map<String, Value>,
}

fn normalize(key: &str) -> String {
    key.trim().replace('_', "-")
}

impl Layers {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut file = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(CliError::Usage(format!(
                    "config line {}: expected key = value",
                    lineno + 1
                )));
            };
            file.insert(normalize(k), v.trim().to_string());
        }
        Ok(Self {
            file,
            ..Self::default()
        })
    }

    /// Flag value if given, else the file value.
    pub fn value<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        let from_file = self.file.get(key).cloned();
        if from_file.is_some() {
            self.used.insert(key.to_string());
        }
        match (flag, from_file) {
            (Some(v), _) => Ok(Some(v)),
            (None, Some(s)) => s
                .parse()
                .map(Some)
                .map_err(|e| CliError::Usage(format!("config key '{key}': {e}"))),
            (None, None) => Ok(None),
        }
    }

    pub fn required<T>(&mut self, key: &str, flag: Option<T>) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.value(key, flag)?
            .ok_or_else(|| CliError::Usage(format!("missing required --{key}")))
    }

    pub fn or<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.value(key, flag)?.unwrap_or(default))
    }

    pub fn record(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.resolved.insert(key.to_string(), v);
    }

    /// Resolved configuration; fails on config keys the command does not use.
    pub fn finish(self) -> Result<Value, CliError> {
        if let Some(k) = self.file.keys().find(|k| !self.used.contains(*k)) {
            return Err(CliError::Usage(format!("unknown config key '{k}'")));
        }
        Ok(Value::Object(self.resolved))
    }
}
