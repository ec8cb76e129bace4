//! Knob resolution with precedence flag > config file > default.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Flag,
    Config,
    Default,
}

#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    pub value: Value,
    pub source: Source,
}

#[derive(Debug, Default)]
pub struct Settings {
    config: Map<String, Value>,
    used: BTreeMap<String, Resolved>,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let value: Value = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let Value::Object(config) = value else {
            bail!("config {} must hold a JSON object", path.display());
        };
        Ok(Self {
            config,
            used: BTreeMap::new(),
        })
    }

    /// Resolves `key`, recording the value and where it came from.
    pub fn get<T: Serialize + DeserializeOwned>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T> {
        let (value, source) = match flag {
            Some(v) => (v, Source::Flag),
            None => match self.config.get(key) {
                Some(raw) => (
                    serde_json::from_value(raw.clone())
                        .with_context(|| format!("config key `{key}` has the wrong type"))?,
                    Source::Config,
                ),
                None => (default, Source::Default),
            },
        };
        self.used.insert(
            key.to_string(),
            Resolved {
                value: serde_json::to_value(&value)?,
                source,
            },
        );
        Ok(value)
    }

    pub fn get_opt<T: Serialize + DeserializeOwned>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>> {
        self.get(key, flag.map(Some), None)
    }

    pub fn resolved(&self) -> &BTreeMap<String, Resolved> {
        &self.used
    }
}
