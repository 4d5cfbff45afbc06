//! `key = value` text with `#` comments, used for run configurations and
//! for the config block embedded in checkpoints.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum KvError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { line: usize, key: String },
    #[error("missing required key `{0}`")]
    Missing(String),
    #[error("key `{key}`: cannot parse {value:?}: {reason}")]
    Value { key: String, value: String, reason: String },
    #[error("unknown key `{0}`")]
    Unknown(String),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvMap {
    entries: BTreeMap<String, String>,
}

impl KvMap {
    pub fn parse(text: &str) -> Result<Self, KvError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| KvError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            })?;
            let key = k.trim();
            if key.is_empty() {
                return Err(KvError::Syntax {
                    line: i + 1,
                    text: raw.to_string(),
                });
            }
            if entries.insert(key.to_string(), v.trim().to_string()).is_some() {
                return Err(KvError::Duplicate {
                    line: i + 1,
                    key: key.to_string(),
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn insert(&mut self, key: &str, value: impl Display) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T>(&self, key: &str) -> Result<Option<T>, KvError>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.raw(key)
            .map(|v| {
                v.parse().map_err(|e: T::Err| KvError::Value {
                    key: key.to_string(),
                    value: v.to_string(),
                    reason: e.to_string(),
                })
            })
            .transpose()
    }

    pub fn get_or<T>(&self, key: &str, default: T) -> Result<T, KvError>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T>(&self, key: &str) -> Result<T, KvError>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.get(key)?.ok_or_else(|| KvError::Missing(key.to_string()))
    }

    /// Rejects any key not in `known`.
    pub fn check_known(&self, known: &[&str]) -> Result<(), KvError> {
        match self.entries.keys().find(|k| !known.contains(&k.as_str())) {
            Some(k) => Err(KvError::Unknown(k.clone())),
            None => Ok(()),
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Sorted `key = value` lines.
    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

/// Parses a comma-separated list, ignoring surrounding whitespace.
pub fn parse_list<T>(key: &str, value: &str) -> Result<Vec<T>, KvError>
where
    T: FromStr,
    T::Err: Display,
{
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|s| {
            s.trim().parse().map_err(|e: T::Err| KvError::Value {
                key: key.to_string(),
                value: value.to_string(),
                reason: e.to_string(),
            })
        })
        .collect()
}
