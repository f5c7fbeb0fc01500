//! Flat `key = value` config files.
//!
//! Format, line by line:
//! - blank lines and lines starting with `#` are ignored;
//! - everything else must be `key = value` (the `=` may be unspaced);
//!   the key is taken up to the first `=`, the value is the rest, both
//!   trimmed;
//! - keys are snake_case and may appear at most once;
//! - values are raw strings — no quoting, escaping, or inline comments —
//!   so paths and URLs need no special treatment.
//!
//! ```text
//! # experiment settings
//! task = sentiment
//! dataset = data/eval.jsonl
//! method = cggv
//! n = 5
//! ```

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

/// Parses the config text into a key → value map.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw_line) in text.lines().enumerate() {
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .with_context(|| format!("line {}: expected `key = value`, got {line:?}", i + 1))?;
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() {
            bail!("line {}: empty key in {line:?}", i + 1);
        }
        if map.insert(key.to_string(), value.to_string()).is_some() {
            bail!("line {}: duplicate key {key:?}", i + 1);
        }
    }
    Ok(map)
}

/// Config entries with typed, consuming accessors; call [`Settings::finish`]
/// at the end so typos in key names surface as errors.
pub struct Settings {
    map: BTreeMap<String, String>,
}

impl Settings {
    pub fn new(map: BTreeMap<String, String>) -> Self {
        Self { map }
    }

    pub fn empty() -> Self {
        Self {
            map: BTreeMap::new(),
        }
    }

    /// Removes and parses `key`, if present.
    pub fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        match self.map.remove(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|e| anyhow!("config key {key}: invalid value {raw:?}: {e}")),
        }
    }

    /// Errors on any key that was never consumed.
    pub fn finish(self) -> Result<()> {
        if let Some(key) = self.map.keys().next() {
            bail!("unknown config key {key:?}");
        }
        Ok(())
    }
}
