//! Resolution of per-command run configs: defaults, then an optional JSON
//! config file, then command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

/// Error in how the tool was invoked or configured (exit code 2).
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    #[default]
    Desk,
    Paper,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

/// Flag values that were actually given, keyed by dotted config path.
#[derive(Default)]
pub struct Overrides(Vec<(String, Value)>);

impl Overrides {
    pub fn set<T: Serialize>(&mut self, key: &str, value: Option<T>) -> &mut Self {
        if let Some(v) = value {
            self.0.push((key.to_string(), serde_json::to_value(v).expect("flag value serializes")));
        }
        self
    }

    pub fn flag(&mut self, key: &str, on: bool) -> &mut Self {
        if on {
            self.0.push((key.to_string(), Value::Bool(true)));
        }
        self
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (slot, v) => *slot = v,
    }
}

/// First key of `over` with no counterpart in `base`. Nested structs do not
/// reject unknown fields on their own, so the check walks the whole tree.
fn unknown_key(base: &Value, over: &Value, prefix: &str) -> Option<String> {
    let (Value::Object(b), Value::Object(o)) = (base, over) else {
        return None;
    };
    o.iter().find_map(|(k, v)| {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match b.get(k) {
            None => Some(path),
            Some(inner) => unknown_key(inner, v, &path),
        }
    })
}

fn set_path(root: &mut Value, key: &str, value: Value) {
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for part in &parts[..parts.len() - 1] {
        if !cur.is_object() {
            *cur = Value::Object(Map::new());
        }
        cur = cur.as_object_mut().unwrap().entry(*part).or_insert(Value::Object(Map::new()));
    }
    if !cur.is_object() {
        *cur = Value::Object(Map::new());
    }
    cur.as_object_mut().unwrap().insert(parts[parts.len() - 1].to_string(), value);
}

/// Reads a config file as raw JSON.
pub fn read_config_file(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))
}

/// `defaults ← file ← flags`.
pub fn resolve<C: Serialize + DeserializeOwned>(defaults: &C, file: Option<&Value>, flags: &Overrides) -> Result<C> {
    let mut v = serde_json::to_value(defaults)?;
    if let Some(f) = file {
        if !f.is_object() {
            return Err(usage("config file must hold a JSON object"));
        }
        if let Some(key) = unknown_key(&v, f, "") {
            return Err(usage(format!("unknown config key {key:?}")));
        }
        merge(&mut v, f.clone());
    }
    for (k, val) in &flags.0 {
        set_path(&mut v, k, val.clone());
    }
    serde_json::from_value(v).map_err(|e| usage(format!("invalid run config: {e}")))
}

/// Preset named by the flag, else by the config file, else desk.
pub fn preset_of(flag: Option<Preset>, file: Option<&Value>) -> Result<Preset> {
    if let Some(p) = flag {
        return Ok(p);
    }
    match file.and_then(|f| f.get("preset")) {
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| usage(format!("config preset: {e}"))),
        None => Ok(Preset::Desk),
    }
}

pub fn require_path(p: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    match p {
        Some(p) if !p.as_os_str().is_empty() => Ok(p.clone()),
        _ => Err(usage(format!("missing required path `{name}` (flag or config file)"))),
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

/// `<file>.<suffix>` beside an output file.
pub fn beside(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Cfg {
        a: u32,
        inner: Inner,
    }

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Inner {
        x: f64,
        y: String,
    }

    fn defaults() -> Cfg {
        Cfg {
            a: 1,
            inner: Inner { x: 0.5, y: "d".into() },
        }
    }

    #[test]
    fn flags_beat_file_beat_defaults() {
        let file = serde_json::json!({"a": 2, "inner": {"y": "file"}});
        let mut ov = Overrides::default();
        ov.set("inner.y", Some("flag")).set::<u32>("a", None);
        let c = resolve(&defaults(), Some(&file), &ov).unwrap();
        assert_eq!(c, Cfg { a: 2, inner: Inner { x: 0.5, y: "flag".into() } });
        assert_eq!(resolve(&defaults(), None, &Overrides::default()).unwrap(), defaults());
    }

    #[test]
    fn unknown_keys_are_usage_errors() {
        let file = serde_json::json!({"b": 2});
        let e = resolve(&defaults(), Some(&file), &Overrides::default()).unwrap_err();
        assert!(e.downcast_ref::<UsageError>().is_some());
        let nested = serde_json::json!({"inner": {"x": 1.0, "z": 1}});
        let e = resolve(&defaults(), Some(&nested), &Overrides::default()).unwrap_err();
        assert!(e.to_string().contains("inner.z"), "{e}");
    }

    #[test]
    fn preset_precedence() {
        let file = serde_json::json!({"preset": "paper"});
        assert_eq!(preset_of(None, Some(&file)).unwrap(), Preset::Paper);
        assert_eq!(preset_of(Some(Preset::Desk), Some(&file)).unwrap(), Preset::Desk);
        assert_eq!(preset_of(None, None).unwrap(), Preset::Desk);
    }
}
