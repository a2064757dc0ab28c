//! Layered experiment settings.
//!
//! Settings are a flat map from key to string. A config file (either
//! `key = value` lines or a flat JSON object) is loaded first, then values
//! given on the command line replace it. Commands read typed values from the
//! merged map with their own defaults.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use super::CliError;

/// Every key a config file may set.
pub const KNOWN_KEYS: &[&str] = &[
    "seed",
    "trials",
    "out",
    "policy",
    "defense",
    "jitter",
    "sets",
    "ways",
    "line_size",
    "hit_latency",
    "clean_latency",
    "dirty_latency",
    "uncached_latency",
    "timer_overhead",
    "n",
    "d",
    "l",
    "d_values",
    "target_set",
    "encoding",
    "levels",
    "period",
    "periods",
    "phase",
    "message",
    "message_len",
    "noise_rate",
    "noise_write_fraction",
    "noise_max",
    "noise_set",
    "slip",
    "freq",
    "calibration_trials",
    "trace",
    "variant",
    "scenario",
    "placement",
    "secret",
];

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

fn normalize_key(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('-', "_")
}

impl Settings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Parses `key = value` lines (`#` starts a comment) or a flat JSON object.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut settings = Settings::new();
        if text.trim_start().starts_with('{') {
            let obj: serde_json::Map<String, serde_json::Value> = serde_json::from_str(text)
                .map_err(|e| CliError::Config(format!("invalid JSON config: {e}")))?;
            for (key, value) in obj {
                settings.insert(&key, json_scalar(&key, &value)?)?;
            }
            return Ok(settings);
        }
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("config line {}: expected key = value", lineno + 1))
            })?;
            settings.insert(key, value.trim().trim_matches('"').to_string())?;
        }
        Ok(settings)
    }

    pub fn insert(&mut self, key: &str, value: String) -> Result<(), CliError> {
        let key = normalize_key(key);
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(CliError::Config(format!("unknown setting `{key}`")));
        }
        self.values.insert(key, value);
        Ok(())
    }

    /// Sets `key` when `value` is present.
    pub fn overlay<T: Display>(&mut self, key: &str, value: Option<T>) -> Result<(), CliError> {
        match value {
            Some(v) => self.insert(key, v.to_string()),
            None => Ok(()),
        }
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn get<T>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.raw(key)
            .map(|s| {
                s.parse::<T>()
                    .map_err(|e| CliError::Config(format!("invalid value `{s}` for {key}: {e}")))
            })
            .transpose()
    }

    pub fn get_or<T>(&self, key: &str, default: T) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn list_or<T>(&self, key: &str, default: &str) -> Result<Vec<T>, CliError>
    where
        T: FromStr + TryFrom<u64>,
        T::Err: Display,
    {
        parse_list(self.raw(key).unwrap_or(default))
            .map_err(|e| CliError::Config(format!("invalid list for {key}: {e}")))
    }
}

fn json_scalar(key: &str, value: &serde_json::Value) -> Result<String, CliError> {
    use serde_json::Value;
    match value {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        Value::Bool(b) => Ok(b.to_string()),
        Value::Array(items) => items
            .iter()
            .map(|v| json_scalar(key, v))
            .collect::<Result<Vec<_>, _>>()
            .map(|v| v.join(",")),
        _ => Err(CliError::Config(format!("setting `{key}` must be a scalar or a list"))),
    }
}

/// Parses `7`, `7,8,9`, `1..16` (inclusive) or mixtures like `1..4,8`.
pub fn parse_list<T>(spec: &str) -> Result<Vec<T>, String>
where
    T: FromStr + TryFrom<u64>,
    T::Err: Display,
{
    let mut out = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((lo, hi)) = part.split_once("..") {
            let hi = hi.trim_start_matches('=');
            let lo: u64 = lo.trim().parse().map_err(|e| format!("`{part}`: {e}"))?;
            let hi: u64 = hi.trim().parse().map_err(|e| format!("`{part}`: {e}"))?;
            if lo > hi {
                return Err(format!("empty range `{part}`"));
            }
            for v in lo..=hi {
                out.push(T::try_from(v).map_err(|_| format!("`{v}` out of range"))?);
            }
        } else {
            out.push(part.parse::<T>().map_err(|e| format!("`{part}`: {e}"))?);
        }
    }
    if out.is_empty() {
        return Err("list is empty".into());
    }
    Ok(out)
}
