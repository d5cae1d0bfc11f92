//! Config-file loading and dotted-key overrides.
//!
//! The file (TOML or JSON by extension) is normalized to a JSON value tree;
//! `-O a.b.c=value` overrides navigate/create nested objects. Subcommand
//! sections deserialize with `deny_unknown_fields`, so typos in files or
//! overrides are usage errors.

use std::path::Path;

use serde_json::Value;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

pub struct ConfigTree {
    root: Value,
}

impl ConfigTree {
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<ConfigTree, CliError> {
        let mut root = match path {
            None => Value::Object(Default::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    CliError::Usage(format!("cannot read config {}: {e}", p.display()))
                })?;
                if p.extension().is_some_and(|e| e == "json") {
                    serde_json::from_str(&text)
                        .map_err(|e| CliError::Usage(format!("invalid JSON config: {e}")))?
                } else {
                    let toml_value: toml::Value = toml::from_str(&text)
                        .map_err(|e| CliError::Usage(format!("invalid TOML config: {e}")))?;
                    serde_json::to_value(toml_value)
                        .map_err(|e| CliError::Usage(format!("config conversion: {e}")))?
                }
            }
        };
        if !root.is_object() {
            return Err(CliError::Usage("config root must be a table".into()));
        }
        for ov in overrides {
            apply_override(&mut root, ov)?;
        }
        Ok(ConfigTree { root })
    }

    /// Deserialize one subcommand section (absent section = defaults).
    pub fn section<T: serde::de::DeserializeOwned + Default>(
        &self,
        name: &str,
    ) -> Result<T, CliError> {
        match self.root.get(name) {
            None => Ok(T::default()),
            Some(v) => serde_json::from_value(v.clone())
                .map_err(|e| CliError::Usage(format!("config section [{name}]: {e}"))),
        }
    }
}

fn apply_override(root: &mut Value, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override '{spec}' is not KEY=VALUE")))?;
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Usage(format!("override key '{key}' is malformed")));
    }
    let mut node = root;
    for part in &parts[..parts.len() - 1] {
        node = node
            .as_object_mut()
            .ok_or_else(|| CliError::Usage(format!("override '{key}' crosses a non-table")))?
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    let leaf = parts.last().unwrap().to_string();
    // Interpret the value as JSON when possible (numbers, bools, arrays),
    // falling back to a plain string.
    let value = serde_json::from_str(raw).unwrap_or(Value::String(raw.to_string()));
    node.as_object_mut()
        .ok_or_else(|| CliError::Usage(format!("override '{key}' crosses a non-table")))?
        .insert(leaf, value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_create_nested_keys() {
        let tree = ConfigTree::load(None, &["train.epochs=5".into(), "train.problem=ms".into()])
            .unwrap();
        assert_eq!(tree.root["train"]["epochs"], 5);
        assert_eq!(tree.root["train"]["problem"], "ms");
    }

    #[test]
    fn malformed_override_is_usage_error() {
        assert!(matches!(
            ConfigTree::load(None, &["no-equals".into()]),
            Err(CliError::Usage(_))
        ));
    }
}
