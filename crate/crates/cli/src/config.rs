//! Sectioned `key = value` run configuration.
//!
//! Every value a command reads, including defaults, is recorded so the
//! resolved configuration can be written next to the outputs and used to
//! repeat the run.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use ini::Ini;

use crate::error::CliError;

/// Sections whose `seed` key follows the global `--seed` flag.
const SEEDED_SECTIONS: [&str; 4] = ["scene", "smoothing", "model", "fwer"];

type Key = (String, String);

#[derive(Debug, Default)]
pub struct RunConfig {
    values: BTreeMap<Key, String>,
    resolved: RefCell<BTreeMap<Key, String>>,
}

fn strip_comment(v: &str) -> &str {
    match v.find(" #").or_else(|| v.find(" ;")) {
        Some(i) => v[..i].trim(),
        None => v.trim(),
    }
}

impl RunConfig {
    pub fn parse_text(text: &str) -> Result<Self, CliError> {
        let ini = Ini::load_from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let mut values = BTreeMap::new();
        for (section, props) in ini.iter() {
            let section = section.unwrap_or("general");
            for (k, v) in props.iter() {
                values.insert(
                    (section.to_string(), k.trim().to_string()),
                    strip_comment(v).to_string(),
                );
            }
        }
        Ok(Self {
            values,
            resolved: RefCell::default(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse_text(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn set(&mut self, section: &str, key: &str, value: impl Display) {
        self.values
            .insert((section.to_string(), key.to_string()), value.to_string());
    }

    /// Apply a `section.key=value` override.
    pub fn apply_override(&mut self, spec: &str) -> Result<(), CliError> {
        let (path, value) = spec.split_once('=').ok_or_else(|| {
            CliError::Config(format!("override '{spec}' is not section.key=value"))
        })?;
        let (section, key) = path
            .trim()
            .split_once('.')
            .ok_or_else(|| CliError::Config(format!("override key '{path}' is not section.key")))?;
        self.set(section, key, value.trim());
        Ok(())
    }

    pub fn apply_seed(&mut self, seed: u64) {
        for section in SEEDED_SECTIONS {
            self.set(section, "seed", seed);
        }
    }

    fn raw(&self, section: &str, key: &str) -> Option<&str> {
        self.values
            .get(&(section.to_string(), key.to_string()))
            .map(String::as_str)
    }

    fn record(&self, section: &str, key: &str, value: String) {
        self.resolved
            .borrow_mut()
            .insert((section.to_string(), key.to_string()), value);
    }

    fn parse<T: FromStr>(section: &str, key: &str, raw: &str) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        raw.parse().map_err(|e| {
            CliError::Config(format!("invalid value '{raw}' for {section}.{key}: {e}"))
        })
    }

    pub fn has(&self, section: &str, key: &str) -> bool {
        self.raw(section, key).is_some()
    }

    pub fn optional<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        match self.raw(section, key) {
            None => Ok(None),
            Some(raw) => {
                let v = Self::parse(section, key, raw)?;
                self.record(section, key, raw.to_string());
                Ok(Some(v))
            }
        }
    }

    pub fn required<T: FromStr>(&self, section: &str, key: &str) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        self.optional(section, key)?
            .ok_or_else(|| CliError::Config(format!("missing required key {section}.{key}")))
    }

    pub fn get_or<T: FromStr + Display>(
        &self,
        section: &str,
        key: &str,
        default: T,
    ) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        match self.optional(section, key)? {
            Some(v) => Ok(v),
            None => {
                self.record(section, key, default.to_string());
                Ok(default)
            }
        }
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<Vec<T>>, CliError>
    where
        T::Err: Display,
    {
        let Some(raw) = self.raw(section, key) else {
            return Ok(None);
        };
        let items = raw
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|item| Self::parse(section, key, item))
            .collect::<Result<Vec<T>, _>>()?;
        self.record(section, key, raw.to_string());
        Ok(Some(items))
    }

    /// Resolved configuration: every key that was set or read, with the
    /// defaults that were used.
    pub fn echo(&self) -> String {
        let mut all = self.values.clone();
        all.extend(
            self.resolved
                .borrow()
                .iter()
                .map(|(k, v)| (k.clone(), v.clone())),
        );
        let mut ini = Ini::new();
        for ((section, key), value) in &all {
            ini.with_section(Some(section.as_str()))
                .set(key.as_str(), value.as_str());
        }
        let mut buf = Vec::new();
        ini.write_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("config text is UTF-8")
    }
}

pub fn format_list<T: Display>(items: &[T]) -> String {
    items
        .iter()
        .map(T::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}
