//! `key = value` settings with `[section]` headers.
//!
//! Every command starts from a table of defaults. A config file may override
//! keys of sections the command knows (other sections are skipped so one file
//! can serve several commands), and command-line flags override both.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde_json::{Map, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Origin {
    Default,
    File(usize),
    Flag,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Default => write!(f, "default"),
            Origin::File(line) => write!(f, "line {line}"),
            Origin::Flag => write!(f, "command line"),
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("{origin}: {message}")]
pub struct ConfigError {
    pub origin: String,
    pub message: String,
}

impl ConfigError {
    fn at(origin: Origin, message: impl Into<String>) -> Self {
        Self { origin: origin.to_string(), message: message.into() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, (String, Origin)>,
}

fn valid_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

impl Settings {
    pub fn with_defaults(defaults: &[(&str, &str)]) -> Self {
        Self { values: defaults.iter().map(|(k, v)| (k.to_string(), (v.to_string(), Origin::Default))).collect() }
    }

    fn sections(&self) -> BTreeSet<String> {
        self.values.keys().filter_map(|k| k.split_once('.').map(|(s, _)| s.to_string())).collect()
    }

    pub fn merge_file(&mut self, text: &str) -> Result<(), ConfigError> {
        let known = self.sections();
        let mut section = String::new();
        let mut seen = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let origin = Origin::File(i + 1);
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .map(str::trim)
                    .filter(|n| valid_name(n))
                    .ok_or_else(|| ConfigError::at(origin, format!("malformed section header {line:?}")))?;
                section = name.to_string();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::at(origin, format!("expected `key = value`, found {line:?}")))?;
            let k = k.trim();
            if !valid_name(k) {
                return Err(ConfigError::at(origin, format!("invalid key {k:?}")));
            }
            let key = if section.is_empty() { k.to_string() } else { format!("{section}.{k}") };
            if !section.is_empty() && !known.contains(&section) {
                continue;
            }
            if !self.values.contains_key(&key) {
                return Err(ConfigError::at(origin, format!("unknown key `{key}`")));
            }
            if !seen.insert(key.clone()) {
                return Err(ConfigError::at(origin, format!("`{key}` set twice")));
            }
            self.values.insert(key, (v.trim().to_string(), origin));
        }
        Ok(())
    }

    pub fn set_flag(&mut self, key: &str, value: impl ToString) -> Result<(), ConfigError> {
        if !self.values.contains_key(key) {
            return Err(ConfigError::at(Origin::Flag, format!("unknown key `{key}`")));
        }
        self.values.insert(key.to_string(), (value.to_string(), Origin::Flag));
        Ok(())
    }

    /// Applies a `key=value` override given on the command line.
    pub fn set_assignment(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| ConfigError::at(Origin::Flag, format!("--set expects key=value, got {assignment:?}")))?;
        self.set_flag(k.trim(), v.trim())
    }

    fn entry(&self, key: &str) -> (&str, Origin) {
        let (v, o) = self.values.get(key).unwrap_or_else(|| panic!("setting `{key}` has no default"));
        (v.as_str(), *o)
    }

    pub fn str(&self, key: &str) -> &str {
        self.entry(key).0
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        let (v, origin) = self.entry(key);
        v.parse().map_err(|e| ConfigError::at(origin, format!("`{key}` = {v:?}: {e}")))
    }

    /// `None` for an empty value or `auto`.
    pub fn get_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        match self.str(key) {
            "" | "auto" => Ok(None),
            _ => self.get(key).map(Some),
        }
    }

    pub fn get_bool(&self, key: &str) -> Result<bool, ConfigError> {
        let (v, origin) = self.entry(key);
        match v.to_ascii_lowercase().as_str() {
            "true" | "yes" | "on" | "1" => Ok(true),
            "false" | "no" | "off" | "0" => Ok(false),
            _ => Err(ConfigError::at(origin, format!("`{key}` = {v:?}: expected true or false"))),
        }
    }

    /// Comma-separated list; empty means no items.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        let (v, origin) = self.entry(key);
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|e| ConfigError::at(origin, format!("`{key}` item {s:?}: {e}"))))
            .collect()
    }

    /// The settings as a config file that reproduces them.
    pub fn to_conf_text(&self) -> String {
        let mut out = String::new();
        let mut current = None;
        for (k, (v, _)) in self.values.iter().filter(|(k, _)| !k.contains('.')) {
            out.push_str(&format!("{k} = {v}\n"));
            current = Some(String::new());
        }
        for (k, (v, _)) in self.values.iter() {
            let Some((s, name)) = k.split_once('.') else { continue };
            if current.as_deref() != Some(s) {
                if current.is_some() {
                    out.push('\n');
                }
                out.push_str(&format!("[{s}]\n"));
                current = Some(s.to_string());
            }
            out.push_str(&format!("{name} = {v}\n"));
        }
        out
    }

    pub fn to_json(&self) -> Value {
        let mut root = Map::new();
        for (k, (v, _)) in &self.values {
            match k.split_once('.') {
                Some((s, name)) => {
                    let sec = root.entry(s.to_string()).or_insert_with(|| Value::Object(Map::new()));
                    if let Value::Object(m) = sec {
                        m.insert(name.to_string(), Value::String(v.clone()));
                    }
                }
                None => {
                    root.insert(k.clone(), Value::String(v.clone()));
                }
            }
        }
        Value::Object(root)
    }

    /// `(key, value, origin)` for logging.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, Origin)> {
        self.values.iter().map(|(k, (v, o))| (k.as_str(), v.as_str(), *o))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> Settings {
        Settings::with_defaults(&[("seed", "0"), ("train.epochs", "5"), ("train.rate", "auto"), ("train.crop", "64,64")])
    }

    #[test]
    fn file_then_flag_precedence() {
        let mut s = base();
        s.merge_file("# comment\nseed = 3\n\n[train]\nepochs = 7\n[other]\nanything = 1\n").unwrap();
        assert_eq!(s.get::<u64>("seed").unwrap(), 3);
        assert_eq!(s.get::<usize>("train.epochs").unwrap(), 7);
        s.set_flag("train.epochs", 9).unwrap();
        assert_eq!(s.get::<usize>("train.epochs").unwrap(), 9);
        assert_eq!(s.get_opt::<f64>("train.rate").unwrap(), None);
        assert_eq!(s.get_list::<usize>("train.crop").unwrap(), vec![64, 64]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let mut s = base();
        let e = s.merge_file("seed = 1\n[train]\nepoch = 3\n").unwrap_err();
        assert_eq!(e.origin, "line 3");
        assert!(e.message.contains("train.epoch"));
        let e = base().merge_file("seed 1\n").unwrap_err();
        assert_eq!(e.origin, "line 1");
        let e = base().merge_file("[train\n").unwrap_err();
        assert_eq!(e.origin, "line 1");
        let e = base().merge_file("[train]\nepochs = 1\nepochs = 2\n").unwrap_err();
        assert_eq!(e.origin, "line 3");
        let mut s = base();
        s.merge_file("\n[train]\nepochs = many\n").unwrap();
        let e = s.get::<usize>("train.epochs").unwrap_err();
        assert_eq!(e.origin, "line 3");
    }

    #[test]
    fn conf_text_round_trips() {
        let mut s = base();
        s.merge_file("[train]\nepochs = 2\n").unwrap();
        s.set_assignment("train.rate=0.01").unwrap();
        let text = s.to_conf_text();
        let mut t = base();
        t.merge_file(&text).unwrap();
        assert_eq!(t.to_json(), s.to_json());
        assert_eq!(s.to_json()["train"]["rate"], "0.01");
    }

    #[test]
    fn bools() {
        let mut s = Settings::with_defaults(&[("a.flag", "yes")]);
        assert!(s.get_bool("a.flag").unwrap());
        s.set_flag("a.flag", "maybe").unwrap();
        assert!(s.get_bool("a.flag").is_err());
        assert!(s.set_flag("a.nope", 1).is_err());
    }
}
