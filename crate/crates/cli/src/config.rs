//! TOML configuration files layered over built-in defaults.
//!
//! A file only lists the keys it changes; everything else keeps the default
//! of the command (for sweeps, the defaults of the chosen figure). Unknown
//! keys are rejected so that typos do not silently fall back to defaults.

use std::path::Path;

use serde::{de::DeserializeOwned, Serialize};
use toml::Value;

use crate::InvalidInput;

pub fn load<T: Serialize + DeserializeOwned>(path: Option<&Path>, defaults: T) -> anyhow::Result<T> {
    let Some(path) = path else {
        return Ok(defaults);
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| InvalidInput(format!("cannot read config {}: {e}", path.display())))?;
    parse(&text, defaults).map_err(|e| InvalidInput(format!("{}: {e}", path.display())).into())
}

pub fn parse<T: Serialize + DeserializeOwned>(text: &str, defaults: T) -> Result<T, String> {
    let user: toml::Table = toml::from_str(text).map_err(|e| e.to_string())?;
    let mut merged = Value::try_from(&defaults).map_err(|e| e.to_string())?;
    merge(&mut merged, &Value::Table(user.clone()));
    let out: T = merged.try_into().map_err(|e: toml::de::Error| e.to_string())?;
    let round = Value::try_from(&out).map_err(|e| e.to_string())?;
    if let Some(key) = unknown_key(&Value::Table(user), &round, String::new()) {
        return Err(format!("unknown config key `{key}`"));
    }
    Ok(out)
}

fn merge(base: &mut Value, over: &Value) {
    match (base, over) {
        (Value::Table(b), Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}

fn unknown_key(user: &Value, known: &Value, prefix: String) -> Option<String> {
    let (Value::Table(u), Value::Table(k)) = (user, known) else {
        return None;
    };
    for (key, v) in u {
        let path = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
        match k.get(key) {
            None => return Some(path),
            Some(inner) => {
                if let Some(bad) = unknown_key(v, inner, path) {
                    return Some(bad);
                }
            }
        }
    }
    None
}
