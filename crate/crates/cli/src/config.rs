//! Flat `key = value` configuration with flag overrides.
//!
//! Each subcommand declares its keys up front. Anything else is rejected,
//! and every error names the key it is about so the caller can report it.

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown key `{0}`")]
    Unknown(String),
    #[error("missing required key `{0}`")]
    Missing(String),
    #[error("key `{key}` = `{value}`: {reason}")]
    Invalid { key: String, value: String, reason: String },
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("key `{0}` given twice in the config file")]
    Duplicate(String),
    #[error("flag `{0}`: expected --key value")]
    Flag(String),
}

impl ConfigError {
    /// The key the error is about, when there is one.
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::Unknown(k) | ConfigError::Missing(k) | ConfigError::Duplicate(k) => Some(k),
            ConfigError::Invalid { key, .. } => Some(key),
            ConfigError::Syntax { .. } | ConfigError::Flag(_) => None,
        }
    }
}

pub fn invalid(key: &str, value: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.into(), value: value.into(), reason: reason.into() }
}

#[derive(Clone, Copy, Debug)]
pub struct KeySpec {
    pub key: &'static str,
    /// `None` marks a required key.
    pub default: Option<&'static str>,
    pub help: &'static str,
}

pub const fn key(key: &'static str, default: &'static str, help: &'static str) -> KeySpec {
    KeySpec { key, default: Some(default), help }
}

pub const fn required(key: &'static str, help: &'static str) -> KeySpec {
    KeySpec { key, default: None, help }
}

/// Parses `key = value` lines. `#` starts a comment; blank lines are skipped.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError::Syntax { line: i + 1, text: raw.into() });
        };
        let k = k.trim().replace('-', "_");
        if k.is_empty() {
            return Err(ConfigError::Syntax { line: i + 1, text: raw.into() });
        }
        if out.iter().any(|(e, _)| *e == k) {
            return Err(ConfigError::Duplicate(k));
        }
        out.push((k, v.trim().to_string()));
    }
    Ok(out)
}

/// Splits `--key value`, `--key=value` and bare `--flag` (meaning `true`).
pub fn parse_flags(args: &[String]) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < args.len() {
        let Some(name) = args[i].strip_prefix("--") else {
            return Err(ConfigError::Flag(args[i].clone()));
        };
        if name.is_empty() {
            return Err(ConfigError::Flag(args[i].clone()));
        }
        if let Some((k, v)) = name.split_once('=') {
            out.push((k.replace('-', "_"), v.to_string()));
            i += 1;
        } else if i + 1 < args.len() && !args[i + 1].starts_with("--") {
            out.push((name.replace('-', "_"), args[i + 1].clone()));
            i += 2;
        } else {
            out.push((name.replace('-', "_"), "true".into()));
            i += 1;
        }
    }
    Ok(out)
}

/// Resolved configuration: defaults, then file entries, then flags.
#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn build(specs: &[KeySpec], file: &[(String, String)], flags: &[(String, String)]) -> Result<Config, ConfigError> {
        let mut values = BTreeMap::new();
        for s in specs {
            if let Some(d) = s.default {
                values.insert(s.key.to_string(), d.to_string());
            }
        }
        for (k, v) in file.iter().chain(flags) {
            if !specs.iter().any(|s| s.key == k) {
                return Err(ConfigError::Unknown(k.clone()));
            }
            values.insert(k.clone(), v.clone());
        }
        for s in specs {
            if !values.contains_key(s.key) {
                return Err(ConfigError::Missing(s.key.into()));
            }
        }
        Ok(Config { values })
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    pub fn str(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("key `{key}` not declared"))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.str(key);
        v.parse::<T>().map_err(|e| invalid(key, v, e.to_string()))
    }

    pub fn f64(&self, key: &str) -> Result<f64, ConfigError> {
        let x: f64 = self.parse(key)?;
        if x.is_nan() {
            return Err(invalid(key, self.str(key), "NaN is not a valid setting"));
        }
        Ok(x)
    }

    pub fn usize(&self, key: &str) -> Result<usize, ConfigError> {
        self.parse(key)
    }

    pub fn u64(&self, key: &str) -> Result<u64, ConfigError> {
        self.parse(key)
    }

    pub fn bool(&self, key: &str) -> Result<bool, ConfigError> {
        match self.str(key) {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            v => Err(invalid(key, v, "expected true or false")),
        }
    }

    /// Comma-separated reals.
    pub fn f64_list(&self, key: &str) -> Result<Vec<f64>, ConfigError> {
        let v = self.str(key);
        v.split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|e| invalid(key, v, e.to_string())))
            .collect()
    }

    /// Flat `key = value` text that rebuilds this configuration.
    pub fn to_kv(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

pub fn keys_help(specs: &[KeySpec]) -> String {
    let mut s = String::from("Keys (set in --config FILE or as --key value):\n");
    for k in specs {
        let d = k.default.map_or("required".to_string(), |d| format!("default {d}"));
        s.push_str(&format!("  {:<22} {} ({d})\n", k.key, k.help));
    }
    s
}
