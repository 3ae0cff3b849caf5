//! `key = value` configuration files, layered under command-line flags.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

pub const KNOWN_KEYS: &[&str] = &[
    "backend",
    "endpoint",
    "max_cluster_size",
    "budget",
    "seed",
    "init",
    "num_reads",
    "sweeps",
    "vns_iterations",
    "migration_interval",
    "max_iterations",
    "time_limit_secs",
    "reps",
    "base_seed",
    "methods",
    "subqubo_size",
    "max_outer_iterations",
    "qbsolv_num_reads",
];

#[derive(Debug, Default, Clone)]
pub struct FileSettings {
    values: BTreeMap<String, String>,
}

/// Problems with a configuration file; `Io` is a file error, `Invalid` a usage error.
#[derive(Debug)]
pub enum SettingsError {
    Io(String),
    Invalid(String),
}

impl FileSettings {
    pub fn load(path: &Path) -> Result<Self, SettingsError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SettingsError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| SettingsError::Invalid(format!("{}: {e}", path.display())))
    }

    /// Blank lines and `#` comments are ignored; every other line is `key = value`.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut values = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key = value", no + 1))?;
            let key = key.trim().replace('-', "_");
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(format!("line {}: unknown key `{key}`", no + 1));
            }
            values.insert(key, value.trim().to_string());
        }
        Ok(Self { values })
    }

    /// `flag` if given, else the file value, else `default`.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, SettingsError>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.values.get(key) {
            Some(raw) => raw
                .parse()
                .map_err(|e| SettingsError::Invalid(format!("config key `{key}`: {e}"))),
            None => Ok(default),
        }
    }

    pub fn pick_opt<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, SettingsError>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        self.values
            .get(key)
            .map(|raw| {
                raw.parse()
                    .map_err(|e| SettingsError::Invalid(format!("config key `{key}`: {e}")))
            })
            .transpose()
    }
}
