//! `key = value` settings files.
//!
//! One setting per line, `#` starts a comment, values may be quoted. Keys are the long
//! flag names (`width`, `theta`, `seeds`, ...); `-` and `_` are interchangeable. Lists
//! are comma-separated. Keys a subcommand does not use are ignored, so one file can
//! serve every subcommand.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use anyhow::Context;

/// Invalid invocation: bad or missing options, malformed settings.
#[derive(Debug)]
pub struct UsageError(String);

impl UsageError {
    pub fn new(msg: impl Into<String>) -> Self {
        UsageError(msg.into())
    }
}

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub const SEED_ENV: &str = "SKETCHPOST_SEED";

#[derive(Debug, Default)]
pub struct Config {
    values: HashMap<String, String>,
}

fn normalize(key: &str) -> String {
    key.trim().replace('_', "-").to_ascii_lowercase()
}

impl Config {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let mut values = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(UsageError::new(format!("line {}: expected key = value", i + 1)).into());
            };
            let v = v.trim();
            let v = v.strip_prefix('"').and_then(|s| s.strip_suffix('"')).unwrap_or(v);
            values.insert(normalize(k), v.to_owned());
        }
        Ok(Config { values })
    }

    fn parse_value<T: FromStr>(key: &str, v: &str) -> anyhow::Result<T> {
        v.parse().map_err(|_| UsageError::new(format!("config: invalid value {v:?} for {key}")).into())
    }

    /// The flag if given, else the config entry.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str) -> anyhow::Result<Option<T>> {
        if flag.is_some() {
            return Ok(flag);
        }
        self.values.get(&normalize(key)).map(|v| Self::parse_value(key, v)).transpose()
    }

    pub fn or<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> anyhow::Result<T> {
        Ok(self.pick(flag, key)?.unwrap_or(default))
    }

    pub fn list<T: FromStr>(&self, key: &str) -> anyhow::Result<Option<Vec<T>>> {
        self.values
            .get(&normalize(key))
            .map(|v| v.split(',').map(|x| Self::parse_value(key, x.trim())).collect())
            .transpose()
    }

    /// Flag, then config `seed`, then `SKETCHPOST_SEED`, then 0.
    pub fn seed(&self, flag: Option<u64>) -> anyhow::Result<u64> {
        if let Some(s) = self.pick(flag, "seed")? {
            return Ok(s);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v.trim().parse().map_err(|_| UsageError::new(format!("{SEED_ENV}={v:?} is not a seed")).into()),
            Err(_) => Ok(0),
        }
    }
}
