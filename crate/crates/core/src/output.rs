//! Metadata blocks prepended to emitted CSV files.

use std::io::Write;

use crate::error::Result;

/// Ordered `key=value` pairs written as `# key=value` comment lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Metadata(pub Vec<(String, String)>);

impl Metadata {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.push(key, value);
        self
    }

    pub fn push(&mut self, key: &str, value: impl ToString) {
        let v = value.to_string().replace(['\n', '\r'], " ");
        self.0.push((key.to_string(), v));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        for (k, v) in &self.0 {
            writeln!(w, "# {k}={v}")?;
        }
        Ok(())
    }

    /// Parses the leading `# key=value` lines of `text`.
    pub fn parse(text: &str) -> Self {
        let mut m = Self::new();
        for line in text.lines() {
            let Some(rest) = line.strip_prefix("# ") else { break };
            if let Some((k, v)) = rest.split_once('=') {
                m.push(k, v);
            }
        }
        m
    }
}
