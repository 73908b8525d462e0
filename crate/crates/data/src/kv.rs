//! `key = value` configuration files.
//!
//! One assignment per line; `#` starts a comment; blank lines are ignored.
//! Later assignments and command-line overrides replace earlier ones.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{DataError, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvConfig {
    origin: String,
    entries: BTreeMap<String, (String, u64)>,
}

impl KvConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut cfg = Self {
            origin: origin.to_string(),
            entries: BTreeMap::new(),
        };
        for (i, raw) in text.lines().enumerate() {
            let line = i as u64 + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((k, v)) = content.split_once('=') else {
                return Err(DataError::Parse {
                    path: origin.to_string(),
                    line,
                    msg: format!("expected 'key = value', got '{content}'"),
                });
            };
            let key = k.trim();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(DataError::Parse {
                    path: origin.to_string(),
                    line,
                    msg: format!("invalid key '{key}'"),
                });
            }
            cfg.entries.insert(key.to_string(), (v.trim().to_string(), line));
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), (value.to_string(), 0));
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Typed lookup; `Ok(None)` when absent.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some((v, line)) => v.parse().map(Some).map_err(|e| DataError::Parse {
                path: self.origin.clone(),
                line: *line,
                msg: format!("{key}: cannot parse '{v}': {e}"),
            }),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// Comma-separated list.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        let Some((v, line)) = self.entries.get(key) else {
            return Ok(None);
        };
        v.split(',')
            .map(|s| s.trim())
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse().map_err(|e| DataError::Parse {
                    path: self.origin.clone(),
                    line: *line,
                    msg: format!("{key}: cannot parse list item '{s}': {e}"),
                })
            })
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    /// Reject keys not accepted by `known`.
    pub fn ensure_known(&self, known: impl Fn(&str) -> bool) -> Result<()> {
        for (k, (_, line)) in &self.entries {
            if !known(k) {
                return Err(DataError::Parse {
                    path: self.origin.clone(),
                    line: *line,
                    msg: format!("unknown key '{k}'"),
                });
            }
        }
        Ok(())
    }

    /// Render as `key = value` lines in key order.
    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, (v, _))| format!("{k} = {v}\n")).collect()
    }
}
