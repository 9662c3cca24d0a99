//! Flat `key = value` settings files. Command-line flags take precedence.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

#[derive(Debug, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
    used: RefCell<BTreeSet<String>>,
}

fn normalize(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('-', "_")
}

impl Settings {
    /// Blank lines and `#` comments are ignored; keys are case-insensitive
    /// and `-` is equivalent to `_`.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut values = BTreeMap::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected `key = value`", no + 1))?;
            let key = normalize(key);
            if key.is_empty() {
                return Err(format!("line {}: empty key", no + 1));
            }
            if values
                .insert(key.clone(), value.trim().to_string())
                .is_some()
            {
                return Err(format!("line {}: duplicate key `{key}`", no + 1));
            }
        }
        Ok(Settings {
            values,
            used: RefCell::default(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        Settings::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    /// The flag value if given, otherwise the parsed file value.
    pub fn pick<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, String>
    where
        T: FromStr,
        T::Err: Display,
    {
        let key = normalize(key);
        let from_file = self.values.get(&key);
        if from_file.is_some() {
            self.used.borrow_mut().insert(key.clone());
        }
        match (flag, from_file) {
            (Some(v), _) => Ok(Some(v)),
            (None, Some(raw)) => raw
                .parse()
                .map(Some)
                .map_err(|e| format!("bad value `{raw}` for `{key}`: {e}")),
            (None, None) => Ok(None),
        }
    }

    pub fn pick_or<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, String>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.pick(flag, key)?.unwrap_or(default))
    }

    /// Errors on any file key no lookup asked for.
    pub fn finish(&self) -> Result<(), String> {
        let used = self.used.borrow();
        match self.values.keys().find(|k| !used.contains(*k)) {
            Some(k) => Err(format!("unknown setting `{k}` for this command")),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let s = Settings::parse("# run\nbatches = 10\nlr=0.01  # step\nN-Boundary = 4\n").unwrap();
        assert_eq!(s.pick(Some(3usize), "batches").unwrap(), Some(3));
        assert_eq!(s.pick::<f64>(None, "lr").unwrap(), Some(0.01));
        assert_eq!(s.pick::<usize>(None, "n_boundary").unwrap(), Some(4));
        assert_eq!(s.pick_or::<u64>(None, "seed", 7).unwrap(), 7);
        s.finish().unwrap();
    }

    #[test]
    fn malformed_files() {
        assert!(Settings::parse("batches 10").is_err());
        assert!(Settings::parse("a = 1\na = 2").is_err());
        assert!(Settings::parse(" = 2").is_err());
        let s = Settings::parse("m = many").unwrap();
        assert!(s.pick::<usize>(None, "m").is_err());
        let s = Settings::parse("typo = 1").unwrap();
        assert!(s.finish().is_err());
    }
}
