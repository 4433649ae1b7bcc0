//! Flat `key = value` configuration files. Blank lines and `#` comments are
//! ignored; keys may contain dots.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvConfig {
    entries: BTreeMap<String, String>,
}

impl KvConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", i + 1)));
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {k}", i + 1)));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile {
                path: path.to_path_buf(),
            },
            _ => e.into(),
        })?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn keys(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("{key}: cannot parse \"{v}\""))),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// Entries whose keys start with `prefix`, with the prefix stripped.
    pub fn with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = (&'a str, &'a str)> {
        self.entries
            .iter()
            .filter_map(move |(k, v)| k.strip_prefix(prefix).map(|s| (s, v.as_str())))
    }

    /// Fails on the first key not accepted by `known`.
    pub fn check_keys(&self, known: impl Fn(&str) -> bool) -> Result<()> {
        match self.entries.keys().find(|k| !known(k)) {
            Some(k) => Err(Error::Config(format!("unknown key {k}"))),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_dotted_keys() {
        let c = KvConfig::parse("# plan\nstage = 2\nmix.T2V = 0.5  # half\n\n").unwrap();
        assert_eq!(c.get::<u8>("stage").unwrap(), Some(2));
        assert_eq!(c.with_prefix("mix.").collect::<Vec<_>>(), vec![("T2V", "0.5")]);
        assert!(c.check_keys(|k| k == "stage").is_err());
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(KvConfig::parse("stage 2").is_err());
        assert!(KvConfig::parse("a = 1\na = 2").is_err());
        let c = KvConfig::parse("steps = ten").unwrap();
        assert!(c.get::<u64>("steps").is_err());
    }
}
