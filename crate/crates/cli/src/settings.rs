//! Key-value config files whose keys mirror the long flags, and resolution
//! of each setting from flag, file or default.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use crate::error::CliError;

/// Parses `key = value` lines. `#` starts a comment; blank lines are ignored.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| CliError::Config {
            key: format!("line {}", n + 1),
            reason: "expected `key = value`".into(),
        })?;
        let key = k.trim().to_string();
        if key.is_empty() {
            return Err(CliError::Config {
                key: format!("line {}", n + 1),
                reason: "empty key".into(),
            });
        }
        if map.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(CliError::Config {
                key,
                reason: "given twice".into(),
            });
        }
    }
    Ok(map)
}

/// Resolves settings and records every resolved value for the snapshot.
#[derive(Debug, Default)]
pub struct Resolver {
    file: BTreeMap<String, String>,
    resolved: BTreeMap<String, String>,
}

impl Resolver {
    pub fn new(file: BTreeMap<String, String>) -> Self {
        Self {
            file,
            resolved: BTreeMap::new(),
        }
    }

    fn lookup<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        let from_file = self.file.remove(key);
        if flag.is_some() {
            return Ok(flag);
        }
        match from_file {
            Some(text) => text.parse().map(Some).map_err(|e| CliError::Config {
                key: key.into(),
                reason: format!("cannot parse `{text}`: {e}"),
            }),
            None => Ok(None),
        }
    }

    fn record<T: Display>(&mut self, key: &str, value: &T) {
        self.resolved.insert(key.into(), value.to_string());
    }

    pub fn get<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let v = self.lookup(key, flag)?.unwrap_or(default);
        self.record(key, &v);
        Ok(v)
    }

    pub fn required<T>(&mut self, key: &str, flag: Option<T>) -> Result<T, CliError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let v = self.lookup(key, flag)?.ok_or_else(|| CliError::Config {
            key: key.into(),
            reason: "required but not given".into(),
        })?;
        self.record(key, &v);
        Ok(v)
    }

    pub fn optional<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let v = self.lookup(key, flag)?;
        if let Some(v) = &v {
            self.record(key, v);
        }
        Ok(v)
    }

    /// Fails on config keys that no setting consumed.
    pub fn finish(self) -> Result<BTreeMap<String, String>, CliError> {
        if let Some(key) = self.file.keys().next() {
            return Err(CliError::Config {
                key: key.clone(),
                reason: "unknown key for this command".into(),
            });
        }
        Ok(self.resolved)
    }
}

/// Snapshot text in the config file format.
pub fn snapshot_text(command: &str, resolved: &BTreeMap<String, String>) -> String {
    let mut out = format!("# {command}\n");
    for (k, v) in resolved {
        out.push_str(&format!("{k} = {v}\n"));
    }
    out
}
