//! `key = value` config files and flag/file/default resolution.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

#[derive(Debug, Default, Clone)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config file {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value, got '{line}'", n + 1)))?;
            let key = k.trim().replace('_', "-");
            if key.is_empty() {
                return Err(CliError::Usage(format!("config line {}: empty key", n + 1)));
            }
            values.insert(key, v.trim().to_owned());
        }
        Ok(Self { values })
    }

    /// Flag value if given, else the file's value, else `default`.
    pub fn pick<T>(&self, key: &str, flag: Option<T>, default: Option<T>) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        if let Some(v) = flag {
            return Ok(v);
        }
        if let Some(raw) = self.values.get(key) {
            return raw
                .parse()
                .map_err(|e| CliError::Usage(format!("config value {key} = '{raw}' is invalid: {e}")));
        }
        default.ok_or_else(|| CliError::Usage(format!("missing required value --{key}")))
    }

    pub fn pick_opt<T>(&self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        match (flag, self.values.contains_key(key)) {
            (Some(v), _) => Ok(Some(v)),
            (None, true) => self.pick(key, None, None).map(Some),
            (None, false) => Ok(None),
        }
    }
}

/// Comma-separated numbers.
pub fn parse_list(key: &str, raw: &str) -> Result<Vec<f64>, CliError> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("--{key}: cannot parse '{s}' as a number")))
        })
        .collect()
}

/// A list of length 1 is repeated to `d` entries.
pub fn broadcast(key: &str, v: Vec<f64>, d: usize) -> Result<Vec<f64>, CliError> {
    match v.len() {
        1 => Ok(vec![v[0]; d]),
        n if n == d => Ok(v),
        n => Err(CliError::Usage(format!("--{key} has {n} entries, expected 1 or {d}"))),
    }
}
