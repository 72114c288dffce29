use std::fs;
use std::path::{Path, PathBuf};

use gdmopt::{Error, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

pub const SUBCOMMANDS: [&str; 7] = ["gen-data", "train", "sample", "eval", "ablate", "trace", "bounds"];

/// Read a JSON configuration object.
pub fn load_file(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| Error::Input(format!("config file {}: {e}", path.display())))?;
    if !value.is_object() {
        return Err(Error::Input(format!("config file {} must hold a JSON object", path.display())));
    }
    Ok(value)
}

/// Keys that apply to `command`: top-level keys that are not sections, then
/// the `command` section (if any) on top.
pub fn section(file: Option<&Value>, command: &str) -> Result<Map<String, Value>> {
    let Some(Value::Object(top)) = file else {
        return Ok(Map::new());
    };
    let mut merged: Map<String, Value> = top
        .iter()
        .filter(|(k, _)| !SUBCOMMANDS.contains(&k.as_str()))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    match top.get(command) {
        Some(Value::Object(sect)) => merged.extend(sect.clone()),
        Some(_) => return Err(Error::Input(format!("config section '{command}' must be an object"))),
        None => {}
    }
    Ok(merged)
}

/// Effective configuration: built-in defaults, overlaid by the file, overlaid
/// by every flag that was given. Unknown keys are rejected by `T`.
pub fn resolve<T, F>(file: &Map<String, Value>, flags: &F) -> Result<T>
where
    T: Serialize + DeserializeOwned + Default,
    F: Serialize,
{
    let mut value = serde_json::to_value(T::default()).expect("defaults serialize");
    let obj = value.as_object_mut().expect("config is an object");
    for (k, v) in file {
        obj.insert(k.clone(), v.clone());
    }
    if let Value::Object(given) = serde_json::to_value(flags).expect("flags serialize") {
        for (k, v) in given {
            if !v.is_null() {
                obj.insert(k, v);
            }
        }
    }
    serde_json::from_value(value).map_err(|e| Error::Input(format!("configuration: {e}")))
}

pub fn require(path: &Option<PathBuf>, flag: &str) -> Result<PathBuf> {
    path.clone()
        .ok_or_else(|| Error::Input(format!("missing required --{flag} (or \"{}\" in the config file)", flag.replace('-', "_"))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Default, PartialEq, Serialize, Deserialize)]
    #[serde(deny_unknown_fields, default)]
    struct Demo {
        a: u32,
        b: Option<String>,
    }

    #[derive(Serialize)]
    struct Flags {
        a: Option<u32>,
    }

    #[test]
    fn flag_beats_file_beats_default() {
        let file: Map<String, Value> = serde_json::from_str(r#"{"a": 3, "b": "x"}"#).unwrap();
        let d: Demo = resolve(&file, &Flags { a: Some(9) }).unwrap();
        assert_eq!(d, Demo { a: 9, b: Some("x".into()) });
        let d: Demo = resolve(&file, &Flags { a: None }).unwrap();
        assert_eq!(d.a, 3);
        let d: Demo = resolve(&Map::new(), &Flags { a: None }).unwrap();
        assert_eq!(d, Demo::default());
    }

    #[test]
    fn unknown_keys_are_input_errors() {
        let file: Map<String, Value> = serde_json::from_str(r#"{"zzz": 1}"#).unwrap();
        let err = resolve::<Demo, _>(&file, &Flags { a: None }).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn sections_override_shared_keys() {
        let file: Value = serde_json::from_str(r#"{"a": 1, "train": {"a": 2}, "eval": {"a": 3}}"#).unwrap();
        let m = section(Some(&file), "train").unwrap();
        assert_eq!(m.get("a"), Some(&Value::from(2)));
        assert!(!m.contains_key("eval"));
    }
}
