//! Line-oriented `key=value` documents, used for both configs and reports.
//!
//! Keys are kept in insertion order on write. Blank lines and lines starting
//! with `#` are ignored on read. Values run to the end of the line.

use std::collections::BTreeMap;
use std::fmt::Display;

use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KvDocument {
    entries: Vec<(String, String)>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum KvError {
    #[error("line {line}: expected key=value")]
    Syntax { line: usize },
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { line: usize, key: String },
}

impl KvDocument {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets `key`, replacing an earlier value in place.
    pub fn set(&mut self, key: &str, value: impl Display) -> &mut Self {
        let value = value.to_string().replace(['\n', '\r'], " ");
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn to_map(&self) -> BTreeMap<String, String> {
        self.entries.iter().cloned().collect()
    }

    pub fn parse(text: &str) -> Result<Self, KvError> {
        let mut doc = KvDocument::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(KvError::Syntax { line: i + 1 });
            };
            let key = k.trim();
            if key.is_empty() {
                return Err(KvError::Syntax { line: i + 1 });
            }
            if doc.get(key).is_some() {
                return Err(KvError::Duplicate { line: i + 1, key: key.to_string() });
            }
            doc.entries.push((key.to_string(), v.trim().to_string()));
        }
        Ok(doc)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push('=');
            out.push_str(v);
            out.push('\n');
        }
        out
    }
}

/// SHA-256 over the sorted `key=value` lines, hex encoded (first 16 bytes).
pub fn config_hash(config: &BTreeMap<String, String>) -> String {
    let mut h = Sha256::new();
    for (k, v) in config {
        h.update(k.as_bytes());
        h.update(b"=");
        h.update(v.as_bytes());
        h.update(b"\n");
    }
    h.finalize()[..16].iter().map(|b| format!("{b:02x}")).collect()
}

/// Formats a percentage with fixed precision so reports are byte-stable.
pub fn pct(v: f64) -> String {
    format!("{v:.4}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let mut d = KvDocument::new();
        d.set("seed", 7).set("name", "wiki demo").set("seed", 8);
        let text = d.render();
        assert_eq!(text, "seed=8\nname=wiki demo\n");
        assert_eq!(KvDocument::parse(&text).unwrap(), d);
    }

    #[test]
    fn errors() {
        assert_eq!(KvDocument::parse("a=1\nnope\n"), Err(KvError::Syntax { line: 2 }));
        assert!(matches!(KvDocument::parse("a=1\na=2"), Err(KvError::Duplicate { .. })));
        assert_eq!(KvDocument::parse("# c\n\n x = y = z \n").unwrap().get("x"), Some("y = z"));
    }

    #[test]
    fn hash_ignores_order_of_insertion() {
        let a: BTreeMap<_, _> = [("x".to_string(), "1".to_string()), ("y".into(), "2".into())].into();
        let b: BTreeMap<_, _> = [("y".to_string(), "2".to_string()), ("x".into(), "1".into())].into();
        assert_eq!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a).len(), 32);
    }
}
