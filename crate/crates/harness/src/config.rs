//! Strict flat key=value configuration files.
//!
//! The format is deliberately tiny: one `key = value` per line, `#` starts
//! a comment line, section structure is spelled with dotted keys
//! (`train.eta = 0.001`). Strictness is the point — every key must be
//! consumed by the experiment that loads the file, so a typo like
//! `train.ate = 0.01` fails loudly instead of silently training with
//! defaults.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
}

/// A parsed config plus a record of which keys have been read. Call
/// [`Config::finish`] after resolving an experiment to reject leftovers.
#[derive(Debug, Clone)]
pub struct Config {
    source: String,
    entries: BTreeMap<String, Entry>,
    used: BTreeSet<String>,
}

fn valid_key(key: &str) -> bool {
    !key.is_empty()
        && key
            .chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' || c == '.')
        && !key.starts_with('.')
        && !key.ends_with('.')
        && !key.contains("..")
}

impl Config {
    pub fn parse(source: &str, text: &str) -> Result<Config> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let Some((key, value)) = trimmed.split_once('=') else {
                bail!("{source}:{line}: expected `key = value`, got `{trimmed}`");
            };
            let key = key.trim();
            let value = value.trim();
            if !valid_key(key) {
                bail!(
                    "{source}:{line}: bad key `{key}` \
                     (lowercase words separated by `.` or `_`)"
                );
            }
            if let Some(prev) = entries.insert(
                key.to_string(),
                Entry {
                    value: value.to_string(),
                    line,
                },
            ) {
                bail!(
                    "{source}:{line}: duplicate key `{key}` (first set on line {})",
                    prev.line
                );
            }
        }
        Ok(Config {
            source: source.to_string(),
            entries,
            used: BTreeSet::new(),
        })
    }

    pub fn from_file(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        Config::parse(&path.display().to_string(), &text)
    }

    /// Insert or replace a key from outside the file (flag overrides).
    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(
            key.to_string(),
            Entry {
                value: value.to_string(),
                line: 0,
            },
        );
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    fn take(&mut self, key: &str) -> Option<&str> {
        if self.entries.contains_key(key) {
            self.used.insert(key.to_string());
            Some(self.entries[key].value.as_str())
        } else {
            None
        }
    }

    pub fn str(&mut self, key: &str) -> Result<String> {
        match self.take(key) {
            Some(v) => Ok(v.to_string()),
            None => bail!("{}: missing required key `{key}`", self.source),
        }
    }

    pub fn str_or(&mut self, key: &str, default: &str) -> String {
        self.take(key).map(str::to_string).unwrap_or_else(|| default.to_string())
    }

    fn parsed<T: std::str::FromStr>(&mut self, key: &str, kind: &str) -> Result<Option<T>> {
        let source = self.source.clone();
        match self.take(key) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|_| {
                anyhow!("{source}: key `{key}`: `{v}` is not {kind}")
            }),
        }
    }

    pub fn u64_or(&mut self, key: &str, default: u64) -> Result<u64> {
        Ok(self.parsed::<u64>(key, "an unsigned integer")?.unwrap_or(default))
    }

    pub fn usize_or(&mut self, key: &str, default: usize) -> Result<usize> {
        Ok(self
            .parsed::<usize>(key, "an unsigned integer")?
            .unwrap_or(default))
    }

    pub fn usize_req(&mut self, key: &str) -> Result<usize> {
        match self.parsed::<usize>(key, "an unsigned integer")? {
            Some(v) => Ok(v),
            None => bail!("{}: missing required key `{key}`", self.source),
        }
    }

    pub fn f64_or(&mut self, key: &str, default: f64) -> Result<f64> {
        let v = self.parsed::<f64>(key, "a number")?.unwrap_or(default);
        if !v.is_finite() {
            bail!("{}: key `{key}`: value must be finite", self.source);
        }
        Ok(v)
    }

    pub fn bool_or(&mut self, key: &str, default: bool) -> Result<bool> {
        let source = self.source.clone();
        match self.take(key) {
            None => Ok(default),
            Some("true") => Ok(true),
            Some("false") => Ok(false),
            Some(v) => bail!("{source}: key `{key}`: `{v}` is not `true` or `false`"),
        }
    }

    /// Reject any key no experiment consumed — the strictness guarantee.
    pub fn finish(&self) -> Result<()> {
        let unknown: Vec<&str> = self
            .entries
            .keys()
            .map(String::as_str)
            .filter(|k| !self.used.contains(*k))
            .collect();
        if unknown.is_empty() {
            return Ok(());
        }
        let mut msg = format!("{}: unknown key", self.source);
        if unknown.len() > 1 {
            msg.push('s');
        }
        for k in unknown {
            let _ = write!(msg, " `{k}`");
            if let Some(e) = self.entries.get(k) {
                if e.line > 0 {
                    let _ = write!(msg, " (line {})", e.line);
                }
            }
        }
        bail!(msg);
    }

    /// Every key-value pair, fully resolved, in sorted order — what the
    /// manifest records so a run can be replayed exactly.
    pub fn resolved(&self) -> BTreeMap<String, String> {
        self.entries
            .iter()
            .map(|(k, e)| (k.clone(), e.value.clone()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_comments_and_blanks() {
        let text = "\n# a comment\nexperiment = demo\ntrain.eta = 0.001\n\nflag = true\n";
        let mut cfg = Config::parse("test", text).unwrap();
        assert_eq!(cfg.str("experiment").unwrap(), "demo");
        assert_eq!(cfg.f64_or("train.eta", 0.5).unwrap(), 0.001);
        assert!(cfg.bool_or("flag", false).unwrap());
        cfg.finish().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected_with_line_numbers() {
        let mut cfg = Config::parse("test", "known = 1\ntrain.ate = 0.1\n").unwrap();
        let _ = cfg.usize_or("known", 0);
        let err = cfg.finish().unwrap_err().to_string();
        assert!(err.contains("unknown key"), "{err}");
        assert!(err.contains("train.ate"), "{err}");
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(Config::parse("t", "no equals sign").is_err());
        assert!(Config::parse("t", "BadKey = 1").is_err());
        assert!(Config::parse("t", ".dot = 1").is_err());
        assert!(Config::parse("t", "a..b = 1").is_err());
        assert!(Config::parse("t", "k = 1\nk = 2").is_err(), "duplicate");
    }

    #[test]
    fn type_errors_name_the_key_and_value() {
        let mut cfg = Config::parse("t", "n = seven").unwrap();
        let err = cfg.usize_or("n", 1).unwrap_err().to_string();
        assert!(err.contains("`n`") && err.contains("seven"), "{err}");
        let mut cfg = Config::parse("t", "b = yes").unwrap();
        assert!(cfg.bool_or("b", false).is_err(), "strict booleans");
        let mut cfg = Config::parse("t", "x = inf").unwrap();
        assert!(cfg.f64_or("x", 0.0).is_err(), "finite floats only");
    }

    #[test]
    fn missing_required_key_is_an_error() {
        let mut cfg = Config::parse("t", "").unwrap();
        assert!(cfg.str("experiment").is_err());
        assert!(cfg.usize_req("train.epochs").is_err());
    }

    #[test]
    fn overrides_replace_file_values() {
        let mut cfg = Config::parse("t", "seed = 1").unwrap();
        cfg.set("seed", 7u64);
        assert_eq!(cfg.u64_or("seed", 0).unwrap(), 7);
        cfg.finish().unwrap();
    }

    #[test]
    fn resolved_map_is_sorted_and_complete() {
        let cfg = Config::parse("t", "b = 2\na = 1").unwrap();
        let keys: Vec<_> = cfg.resolved().into_keys().collect();
        assert_eq!(keys, vec!["a".to_string(), "b".to_string()]);
    }
}
