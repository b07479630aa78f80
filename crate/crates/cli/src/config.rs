//! `key = value` config files. Command-line flags win over file values,
//! file values win over built-in defaults.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};

#[derive(Debug, Default, Clone)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
    source: String,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                bail!("{source}:{}: expected `key = value`, got {line:?}", i + 1);
            };
            let key = normalize(k.trim());
            if values.insert(key.clone(), v.trim().to_string()).is_some() {
                bail!("{source}:{}: duplicate key {key:?}", i + 1);
            }
        }
        Ok(Self { values, source: source.to_string() })
    }

    /// `flag` if given, else the file value for `key`, parsed.
    pub fn pick<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.values.get(&normalize(key)) {
            None => Ok(None),
            Some(v) => {
                v.parse().map(Some).map_err(|e| anyhow::anyhow!("{}: invalid value {v:?} for {key}: {e}", self.source))
            }
        }
    }

    pub fn or<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        Ok(self.pick(flag, key)?.unwrap_or(default))
    }

    /// Boolean switches: set by the flag, or by `key = true` in the file.
    pub fn switch(&self, flag: bool, key: &str) -> Result<bool> {
        Ok(flag || self.pick::<bool>(None, key)?.unwrap_or(false))
    }
}

fn normalize(key: &str) -> String {
    key.trim_start_matches("--").replace('-', "_").to_ascii_lowercase()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let c = ConfigFile::parse("k = 6\n# note\nseed=9 # trailing\ntrain-frac = 0.5\n", "t").unwrap();
        assert_eq!(c.or(None, "k", 4usize).unwrap(), 6);
        assert_eq!(c.or(Some(3), "k", 4usize).unwrap(), 3);
        assert_eq!(c.or(None, "seed", 42u64).unwrap(), 9);
        assert_eq!(c.or(None, "train_frac", 0.75).unwrap(), 0.5);
        assert_eq!(c.or(None, "missing", 1u8).unwrap(), 1);
    }

    #[test]
    fn bad_lines_name_the_line() {
        let e = ConfigFile::parse("k = 1\nnonsense\n", "cfg").unwrap_err();
        assert!(e.to_string().contains("cfg:2"));
        let c = ConfigFile::parse("k = four", "cfg").unwrap();
        assert!(c.or(None, "k", 4usize).is_err());
    }
}
