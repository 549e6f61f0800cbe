//! Layered run configuration: config file values overridden by flags.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};
use thiserror::Error;

pub const OUTPUT_DIR_ENV: &str = "PREDECO_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "predeco-out";

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("missing required key `{0}`")]
    MissingRequired(String),
    #[error("key `{key}` must be {expected}")]
    TypeError { key: String, expected: &'static str },
    #[error("invalid value for `{key}`: {reason}")]
    InvalidValue { key: String, reason: String },
    #[error("cannot read config {path}: {reason}")]
    File { path: PathBuf, reason: String },
}

pub type Result<T> = std::result::Result<T, ConfigError>;

/// Reads a TOML or JSON config into a flat key map. The format follows the
/// extension; unknown extensions try JSON, then TOML.
pub fn load_file(path: &Path) -> Result<Map<String, Value>> {
    let err = |reason: String| ConfigError::File { path: path.to_path_buf(), reason };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    let value: Value = match ext {
        "json" => serde_json::from_str(&text).map_err(|e| err(e.to_string()))?,
        "toml" => toml::from_str(&text).map_err(|e| err(e.to_string()))?,
        _ => match serde_json::from_str(&text) {
            Ok(v) => v,
            Err(_) => toml::from_str(&text).map_err(|e| err(e.to_string()))?,
        },
    };
    match value {
        Value::Object(map) => Ok(map),
        _ => Err(err("top level must be a table".into())),
    }
}

/// Serialises a flag struct, dropping unset options.
pub fn flag_map<T: Serialize>(flags: &T) -> Map<String, Value> {
    match serde_json::to_value(flags) {
        Ok(Value::Object(m)) => m.into_iter().filter(|(_, v)| !v.is_null()).collect(),
        _ => Map::new(),
    }
}

/// Merged key/value layer that tracks which keys were consumed.
#[derive(Debug, Default)]
pub struct Layer {
    map: Map<String, Value>,
    used: BTreeSet<String>,
}

impl Layer {
    /// `flags` take precedence over `file`.
    pub fn merge(file: Map<String, Value>, flags: Map<String, Value>) -> Self {
        let mut map = file;
        map.extend(flags);
        Layer { map, used: BTreeSet::new() }
    }

    fn take(&mut self, key: &str) -> Option<&Value> {
        self.used.insert(key.to_string());
        self.map.get(key)
    }

    pub fn opt_f64(&mut self, key: &str) -> Result<Option<f64>> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => v.as_f64().map(Some).ok_or(ConfigError::TypeError { key: key.into(), expected: "a number" }),
        }
    }

    pub fn f64(&mut self, key: &str, default: f64) -> Result<f64> {
        Ok(self.opt_f64(key)?.unwrap_or(default))
    }

    pub fn opt_u64(&mut self, key: &str) -> Result<Option<u64>> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => v
                .as_u64()
                .map(Some)
                .ok_or(ConfigError::TypeError { key: key.into(), expected: "a non-negative integer" }),
        }
    }

    pub fn u64(&mut self, key: &str, default: u64) -> Result<u64> {
        Ok(self.opt_u64(key)?.unwrap_or(default))
    }

    pub fn usize(&mut self, key: &str, default: usize) -> Result<usize> {
        let v = self.u64(key, default as u64)?;
        usize::try_from(v).map_err(|_| ConfigError::TypeError { key: key.into(), expected: "an integer that fits in usize" })
    }

    pub fn i64(&mut self, key: &str, default: i64) -> Result<i64> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => v.as_i64().ok_or(ConfigError::TypeError { key: key.into(), expected: "an integer" }),
        }
    }

    pub fn bool(&mut self, key: &str, default: bool) -> Result<bool> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => v.as_bool().ok_or(ConfigError::TypeError { key: key.into(), expected: "a boolean" }),
        }
    }

    pub fn opt_string(&mut self, key: &str) -> Result<Option<String>> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => v.as_str().map(|s| Some(s.to_string())).ok_or(ConfigError::TypeError { key: key.into(), expected: "a string" }),
        }
    }

    pub fn string(&mut self, key: &str, default: &str) -> Result<String> {
        Ok(self.opt_string(key)?.unwrap_or_else(|| default.to_string()))
    }

    /// Accepts an array of numbers or a comma-separated string.
    pub fn opt_vec_f64(&mut self, key: &str) -> Result<Option<Vec<f64>>> {
        let type_err = || ConfigError::TypeError { key: key.into(), expected: "a list of numbers" };
        match self.take(key) {
            None => Ok(None),
            Some(Value::Array(items)) => items.iter().map(|v| v.as_f64().ok_or_else(type_err)).collect::<Result<_>>().map(Some),
            Some(Value::String(s)) => s.split(',').map(|t| t.trim().parse::<f64>().map_err(|_| type_err())).collect::<Result<_>>().map(Some),
            Some(_) => Err(type_err()),
        }
    }

    pub fn req_vec_f64(&mut self, key: &str) -> Result<Vec<f64>> {
        self.opt_vec_f64(key)?.ok_or_else(|| ConfigError::MissingRequired(key.into()))
    }

    /// Parses a string key through `FromStr`.
    pub fn parsed<T: std::str::FromStr>(&mut self, key: &str, default: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let s = self.string(key, default)?;
        s.parse().map_err(|e: T::Err| ConfigError::InvalidValue { key: key.into(), reason: e.to_string() })
    }

    /// Fails on the first key that no getter asked for.
    pub fn finish(self) -> Result<()> {
        match self.map.keys().find(|k| !self.used.contains(*k)) {
            Some(k) => Err(ConfigError::UnknownKey(k.clone())),
            None => Ok(()),
        }
    }
}

/// Output directory: flag or file value, then the environment, then the
/// built-in default.
pub fn resolve_output_dir(layer: &mut Layer) -> Result<PathBuf> {
    if let Some(dir) = layer.opt_string("output_dir")? {
        return Ok(PathBuf::from(dir));
    }
    Ok(std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn obj(v: Value) -> Map<String, Value> {
        match v {
            Value::Object(m) => m,
            _ => unreachable!(),
        }
    }

    #[test]
    fn flags_override_file() {
        let mut l = Layer::merge(obj(json!({"trials": 100, "dt": 0.001})), obj(json!({"trials": 200})));
        assert_eq!(l.usize("trials", 1).unwrap(), 200);
        assert_eq!(l.f64("dt", 0.5).unwrap(), 0.001);
        l.finish().unwrap();
    }

    #[test]
    fn unknown_key_is_named() {
        let mut l = Layer::merge(obj(json!({"trails": 100})), Map::new());
        assert_eq!(l.usize("trials", 1).unwrap(), 1);
        assert_eq!(l.finish(), Err(ConfigError::UnknownKey("trails".into())));
    }

    #[test]
    fn type_and_missing_errors_name_the_key() {
        let mut l = Layer::merge(obj(json!({"trials": "many"})), Map::new());
        assert_eq!(l.usize("trials", 1), Err(ConfigError::TypeError { key: "trials".into(), expected: "a non-negative integer" }));
        assert_eq!(l.req_vec_f64("p"), Err(ConfigError::MissingRequired("p".into())));
    }

    #[test]
    fn vectors_from_strings_or_arrays() {
        let mut l = Layer::merge(obj(json!({"p": "0.3, 0.7", "q": [0.5, 0.5]})), Map::new());
        assert_eq!(l.req_vec_f64("p").unwrap(), vec![0.3, 0.7]);
        assert_eq!(l.req_vec_f64("q").unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn toml_and_json_files() {
        let dir = tempfile::tempdir().unwrap();
        let t = dir.path().join("run.toml");
        std::fs::write(&t, "trials = 100\np = [0.3, 0.7]\n").unwrap();
        let j = dir.path().join("run.json");
        std::fs::write(&j, r#"{"trials": 100, "p": [0.3, 0.7]}"#).unwrap();
        assert_eq!(load_file(&t).unwrap(), load_file(&j).unwrap());
        let bad = dir.path().join("bad.toml");
        std::fs::write(&bad, "= nope").unwrap();
        assert!(matches!(load_file(&bad), Err(ConfigError::File { .. })));
    }
}
