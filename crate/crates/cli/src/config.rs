//! TOML run configuration with key-path tracking, so every error names the key that
//! caused it and unknown keys are rejected.

use crate::error::CliError;
use std::cell::RefCell;
use std::collections::BTreeSet;
use std::path::Path;
use toml::{Table, Value};

/// Parsed configuration file plus the set of key paths read so far.
#[derive(Debug)]
pub struct Config {
    root: Table,
    used: RefCell<BTreeSet<String>>,
}

fn err(key: &str, message: impl Into<String>) -> CliError {
    CliError::Config { key: key.to_string(), message: message.into() }
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let root: Table = text.parse().map_err(|e: toml::de::Error| {
            let key = e.span().map_or_else(|| "<file>".to_string(), |s| key_at(text, s.start));
            err(&key, e.message().trim().to_string())
        })?;
        Ok(Self { root, used: RefCell::new(BTreeSet::new()) })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| err("<file>", format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn empty() -> Self {
        Self { root: Table::new(), used: RefCell::new(BTreeSet::new()) }
    }

    fn lookup(&self, path: &str) -> Option<&Value> {
        let mut parts = path.split('.');
        let mut cur = self.root.get(parts.next()?)?;
        for p in parts {
            cur = cur.as_table()?.get(p)?;
        }
        Some(cur)
    }

    fn touch(&self, path: &str) {
        let mut used = self.used.borrow_mut();
        let mut prefix = String::new();
        for part in path.split('.') {
            prefix = join(&prefix, part);
            used.insert(prefix.clone());
        }
    }

    fn get(&self, path: &str) -> Option<&Value> {
        let v = self.lookup(path);
        if v.is_some() {
            self.touch(path);
        }
        v
    }

    pub fn has(&self, path: &str) -> bool {
        self.lookup(path).is_some()
    }

    pub fn opt_f64(&self, path: &str) -> Result<Option<f64>, CliError> {
        match self.get(path) {
            None => Ok(None),
            Some(Value::Float(v)) => Ok(Some(*v)),
            Some(Value::Integer(v)) => Ok(Some(*v as f64)),
            Some(other) => Err(err(path, format!("expected a number, found {}", other.type_str()))),
        }
    }

    pub fn f64(&self, path: &str) -> Result<f64, CliError> {
        self.opt_f64(path)?.ok_or_else(|| err(path, "missing required number"))
    }

    pub fn f64_or(&self, path: &str, default: f64) -> Result<f64, CliError> {
        Ok(self.opt_f64(path)?.unwrap_or(default))
    }

    pub fn opt_usize(&self, path: &str) -> Result<Option<usize>, CliError> {
        match self.get(path) {
            None => Ok(None),
            Some(Value::Integer(v)) if *v >= 0 => Ok(Some(*v as usize)),
            Some(Value::Integer(v)) => Err(err(path, format!("expected a nonnegative integer, found {v}"))),
            Some(other) => Err(err(path, format!("expected an integer, found {}", other.type_str()))),
        }
    }

    pub fn usize(&self, path: &str) -> Result<usize, CliError> {
        self.opt_usize(path)?.ok_or_else(|| err(path, "missing required integer"))
    }

    pub fn usize_or(&self, path: &str, default: usize) -> Result<usize, CliError> {
        Ok(self.opt_usize(path)?.unwrap_or(default))
    }

    pub fn opt_bool(&self, path: &str) -> Result<Option<bool>, CliError> {
        match self.get(path) {
            None => Ok(None),
            Some(Value::Boolean(b)) => Ok(Some(*b)),
            Some(other) => Err(err(path, format!("expected a boolean, found {}", other.type_str()))),
        }
    }

    pub fn bool_or(&self, path: &str, default: bool) -> Result<bool, CliError> {
        Ok(self.opt_bool(path)?.unwrap_or(default))
    }

    pub fn opt_str(&self, path: &str) -> Result<Option<String>, CliError> {
        match self.get(path) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(other) => Err(err(path, format!("expected a string, found {}", other.type_str()))),
        }
    }

    pub fn str(&self, path: &str) -> Result<String, CliError> {
        self.opt_str(path)?.ok_or_else(|| err(path, "missing required string"))
    }

    pub fn opt_vec(&self, path: &str) -> Result<Option<Vec<f64>>, CliError> {
        match self.get(path) {
            None => Ok(None),
            Some(Value::Array(items)) => items
                .iter()
                .enumerate()
                .map(|(k, v)| match v {
                    Value::Float(x) => Ok(*x),
                    Value::Integer(x) => Ok(*x as f64),
                    other => Err(err(path, format!("entry {k}: expected a number, found {}", other.type_str()))),
                })
                .collect::<Result<Vec<_>, _>>()
                .map(Some),
            Some(other) => Err(err(path, format!("expected an array of numbers, found {}", other.type_str()))),
        }
    }

    pub fn vec(&self, path: &str) -> Result<Vec<f64>, CliError> {
        self.opt_vec(path)?.ok_or_else(|| err(path, "missing required array"))
    }

    /// Row-major square matrix; the dimension is the square root of the length.
    pub fn square(&self, path: &str) -> Result<(usize, Vec<f64>), CliError> {
        let v = self.vec(path)?;
        let d = (v.len() as f64).sqrt().round() as usize;
        if d == 0 || d * d != v.len() {
            return Err(err(path, format!("expected a row-major square matrix, found {} entries", v.len())));
        }
        Ok((d, v))
    }

    /// Marks a table as present (so its keys are checked) and reports whether it exists.
    pub fn table(&self, path: &str) -> Result<bool, CliError> {
        match self.get(path) {
            None => Ok(false),
            Some(Value::Table(_)) => Ok(true),
            Some(other) => Err(err(path, format!("expected a table, found {}", other.type_str()))),
        }
    }

    /// Fails on the first key that no command read.
    pub fn finish(&self) -> Result<(), CliError> {
        let used = self.used.borrow();
        let mut stack: Vec<(String, &Table)> = vec![(String::new(), &self.root)];
        while let Some((prefix, t)) = stack.pop() {
            for (k, v) in t {
                let path = join(&prefix, k);
                if !used.contains(&path) {
                    return Err(err(&path, "unknown key"));
                }
                if let Value::Table(inner) = v {
                    stack.push((path, inner));
                }
            }
        }
        Ok(())
    }

    /// The configuration as JSON with `output_dir` removed, used for the config hash.
    pub fn to_json(&self) -> serde_json::Value {
        let mut root = self.root.clone();
        root.remove("output_dir");
        toml_to_json(&Value::Table(root))
    }
}

fn toml_to_json(v: &Value) -> serde_json::Value {
    use serde_json::Value as J;
    match v {
        Value::String(s) => J::String(s.clone()),
        Value::Integer(i) => J::from(*i),
        Value::Float(f) => serde_json::Number::from_f64(*f).map_or(J::Null, J::Number),
        Value::Boolean(b) => J::Bool(*b),
        Value::Datetime(d) => J::String(d.to_string()),
        Value::Array(a) => J::Array(a.iter().map(toml_to_json).collect()),
        Value::Table(t) => J::Object(t.iter().map(|(k, v)| (k.clone(), toml_to_json(v))).collect()),
    }
}

/// Best-effort dotted key for a parse error at byte `pos`: the innermost table header
/// above it joined with the key on its line.
fn key_at(text: &str, pos: usize) -> String {
    let before = &text[..pos.min(text.len())];
    let line_start = before.rfind('\n').map_or(0, |i| i + 1);
    let line_end = text[line_start..].find('\n').map_or(text.len(), |i| line_start + i);
    let line = text[line_start..line_end].trim();
    let mut section = String::new();
    for l in text[..line_start].lines() {
        let l = l.trim();
        if l.starts_with('[') && l.ends_with(']') {
            section = l.trim_matches(|c| c == '[' || c == ']').trim().to_string();
        }
    }
    match line.split_once('=') {
        Some((k, _)) => join(&section, k.trim()),
        None if !section.is_empty() => section,
        None => "<file>".to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_reported_with_their_path() {
        let c = Config::parse("command = \"solve\"\n[solver]\ntol = 1e-8\ntoll = 3\n").unwrap();
        c.str("command").unwrap();
        c.f64("solver.tol").unwrap();
        match c.finish() {
            Err(CliError::Config { key, .. }) => assert_eq!(key, "solver.toll"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn type_errors_name_the_key() {
        let c = Config::parse("[potential]\nprecision = [1, 2, \"x\", 4]\n").unwrap();
        match c.vec("potential.precision") {
            Err(CliError::Config { key, message }) => {
                assert_eq!(key, "potential.precision");
                assert!(message.contains("entry 2"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parse_errors_point_at_the_line() {
        match Config::parse("[solver]\ntol = = 3\n") {
            Err(CliError::Config { key, .. }) => assert_eq!(key, "solver.tol"),
            other => panic!("{other:?}"),
        }
    }
}
