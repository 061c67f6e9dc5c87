//! JSON config files with command-line overrides, and exit-code mapping.

use std::path::Path;

use anyhow::anyhow;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

/// A failed run: configuration problems exit with 1, data problems with 2.
#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Data(anyhow::Error),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Data(_) => 2,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Config(e) | Failure::Data(e) => e,
        }
    }
}

impl From<sroc_core::Error> for Failure {
    fn from(e: sroc_core::Error) -> Self {
        if e.is_config() {
            Failure::Config(e.into())
        } else {
            Failure::Data(e.into())
        }
    }
}

pub fn config_error(msg: impl std::fmt::Display) -> Failure {
    Failure::Config(anyhow!("{msg}"))
}

pub fn data_error(msg: impl std::fmt::Display) -> Failure {
    Failure::Data(anyhow!("{msg}"))
}

/// Keys whose relative values resolve against the config file's directory.
const PATH_KEYS: [&str; 9] = [
    "manifest",
    "levels",
    "plan",
    "out",
    "input",
    "maps_dir",
    "curves_dir",
    "summary",
    "config",
];

fn resolve(value: &mut Value, base: &Path) {
    match value {
        Value::String(s) if Path::new(s.as_str()).is_relative() => {
            *s = base.join(s.as_str()).to_string_lossy().into_owned();
        }
        Value::Array(items) => items.iter_mut().for_each(|v| resolve(v, base)),
        _ => {}
    }
}

pub fn read_config(path: &Path) -> Result<Map<String, Value>, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_error(format!("cannot read config {}: {e}", path.display())))?;
    match serde_json::from_str(&text) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(config_error(format!("{}: config must be a JSON object", path.display()))),
        Err(e) => Err(config_error(format!("{}: {e}", path.display()))),
    }
}

/// Config values first, then every flag given on the command line.
pub fn merge<T: Serialize + DeserializeOwned + Default>(cli: T, config: Option<&Path>) -> Result<T, Failure> {
    let Some(path) = config else {
        return Ok(cli);
    };
    let mut map = read_config(path)?;
    let known = match serde_json::to_value(T::default()) {
        Ok(Value::Object(m)) => m,
        _ => unreachable!("argument structs serialize to objects"),
    };
    if let Some(bad) = map.keys().find(|k| !known.contains_key(*k)) {
        return Err(config_error(format!("{}: unknown key `{bad}`", path.display())));
    }
    let base = path.parent().unwrap_or(Path::new(""));
    for (key, value) in map.iter_mut() {
        if PATH_KEYS.contains(&key.as_str()) {
            resolve(value, base);
        }
    }
    if let Ok(Value::Object(flags)) = serde_json::to_value(&cli) {
        for (key, value) in flags {
            if !value.is_null() {
                map.insert(key, value);
            }
        }
    }
    serde_json::from_value(Value::Object(map)).map_err(|e| config_error(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Serialize, Deserialize, Default, Debug, PartialEq)]
    struct Demo {
        ratio: Option<f64>,
        seed: Option<u64>,
        manifest: Option<String>,
    }

    #[test]
    fn flags_override_config_and_paths_resolve() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"ratio": 0.1, "seed": 3, "manifest": "m.json"}"#).unwrap();
        let got = merge(Demo { ratio: Some(0.2), ..Demo::default() }, Some(&path)).unwrap();
        assert_eq!(got.ratio, Some(0.2));
        assert_eq!(got.seed, Some(3));
        assert_eq!(got.manifest, Some(dir.path().join("m.json").to_string_lossy().into_owned()));
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"ratoi": 0.1}"#).unwrap();
        assert_eq!(merge(Demo::default(), Some(&path)).unwrap_err().code(), 1);
        std::fs::write(&path, "[1]").unwrap();
        assert_eq!(merge(Demo::default(), Some(&path)).unwrap_err().code(), 1);
    }
}
