//! `--config FILE` support. The file is a JSON object whose keys are long flag
//! names; its values are spliced in ahead of the user's own flags so that
//! explicit flags win. The optional `model` key holds a model configuration
//! and is handed back separately.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

#[derive(Debug, Default)]
pub struct Overlay {
    pub args: Vec<OsString>,
    pub model: Option<Value>,
}

/// The value given to `--config`, if any.
pub fn config_path(args: &[OsString]) -> Option<PathBuf> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(v));
        }
    }
    None
}

pub fn read(path: &Path) -> Result<Overlay, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| format!("config {}: {e}", path.display()))?;
    let Value::Object(map) = value else {
        return Err(format!("config {} must be a JSON object", path.display()));
    };
    from_map(map)
}

fn from_map(mut map: Map<String, Value>) -> Result<Overlay, String> {
    let model = map.remove("model");
    let mut args = Vec::new();
    for (key, value) in map {
        if key == "config" {
            return Err("config files cannot nest --config".into());
        }
        let flag = format!("--{}", key.replace('_', "-"));
        match value {
            Value::Array(items) => {
                for item in items {
                    args.push(OsString::from(&flag));
                    args.push(OsString::from(scalar(&key, &item)?));
                }
            }
            Value::Bool(true) => args.push(OsString::from(flag)),
            Value::Bool(false) | Value::Null => {}
            other => {
                args.push(OsString::from(flag));
                args.push(OsString::from(scalar(&key, &other)?));
            }
        }
    }
    Ok(Overlay { args, model })
}

fn scalar(key: &str, v: &Value) -> Result<String, String> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        _ => Err(format!("config key {key}: expected a string or number")),
    }
}

/// `argv` with the overlay inserted right after the subcommand name.
pub fn splice(argv: Vec<OsString>, overlay: &Overlay) -> Vec<OsString> {
    if argv.len() < 2 || overlay.args.is_empty() {
        return argv;
    }
    let mut out = Vec::with_capacity(argv.len() + overlay.args.len());
    out.extend_from_slice(&argv[..2]);
    out.extend(overlay.args.iter().cloned());
    out.extend_from_slice(&argv[2..]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn keys_become_flags() {
        let Value::Object(m) = json!({"lr": 0.001, "batch_size": 2, "history": ["a", "b"], "model": {"n_layers": 2}})
        else {
            unreachable!()
        };
        let o = from_map(m).unwrap();
        let args: Vec<String> = o.args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
        assert_eq!(args, ["--batch-size", "2", "--history", "a", "--history", "b", "--lr", "0.001"]);
        assert_eq!(o.model, Some(json!({"n_layers": 2})));
    }

    #[test]
    fn splice_keeps_user_flags_last() {
        let argv: Vec<OsString> = ["parley", "finetune", "--lr", "0.5"].iter().map(OsString::from).collect();
        let o = Overlay { args: vec!["--lr".into(), "0.1".into()], model: None };
        let out = splice(argv, &o);
        assert_eq!(out[2], "--lr");
        assert_eq!(out[3], "0.1");
        assert_eq!(out[5], "0.5");
    }

    #[test]
    fn finds_config_path() {
        let argv: Vec<OsString> = ["parley", "eval", "--config=c.json"].iter().map(OsString::from).collect();
        assert_eq!(config_path(&argv), Some(PathBuf::from("c.json")));
    }
}
