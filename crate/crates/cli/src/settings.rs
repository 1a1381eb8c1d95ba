//! Config files, flag overrides and run manifests.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use clap::parser::ValueSource;
use clap::ArgMatches;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::Failure;

/// Written next to the outputs before any work starts and completed when the
/// command finishes. Its `config` is the fully resolved settings object, so
/// passing the manifest back through `--config` repeats the run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: u64,
    pub config: Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub started_at: String,
    pub finished_at: Option<String>,
}

impl RunManifest {
    pub fn start(command: &str, seed: u64, config: &impl Serialize) -> Result<Self, Failure> {
        Ok(Self {
            command: command.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            seed,
            config: serde_json::to_value(config).map_err(|e| Failure::usage(e.to_string()))?,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            started_at: now(),
            finished_at: None,
        })
    }

    pub fn input(&mut self, name: &str, path: &Path) {
        self.inputs.insert(name.into(), path.display().to_string());
    }

    pub fn output(&mut self, name: &str, path: &Path) {
        self.outputs.insert(name.into(), path.display().to_string());
    }

    pub fn write(&self, path: &Path) -> Result<(), Failure> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Failure::usage(e.to_string()))?;
        fs::write(path, text + "\n").map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
    }

    pub fn finish(&mut self, path: &Path) -> Result<(), Failure> {
        self.finished_at = Some(now());
        self.write(path)
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Reads a settings file: either a bare settings object or a run manifest,
/// in which case its `config` member is used.
pub fn read_config_file(path: &Path) -> Result<Value, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    let value: Value =
        serde_json::from_str(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    match value {
        Value::Object(mut map) if map.contains_key("tool_version") && map.contains_key("config") => {
            Ok(map.remove("config").unwrap_or(Value::Null))
        }
        other => Ok(other),
    }
}

/// Builds settings from the defaults, then the config file, then every flag
/// the user actually typed. `flags` is the serialized argument struct; its
/// keys are the clap argument ids. A `nnls_` prefix addresses the nested
/// solver options.
pub fn resolve<S>(file: Option<Value>, flags: Value, matches: &ArgMatches) -> Result<S, Failure>
where
    S: Serialize + DeserializeOwned + Default,
{
    let base: S = match file {
        Some(v) => serde_json::from_value(v).map_err(|e| Failure::usage(format!("config file: {e}")))?,
        None => S::default(),
    };
    let mut merged = serde_json::to_value(&base).map_err(|e| Failure::usage(e.to_string()))?;
    let Value::Object(flags) = flags else {
        return Err(Failure::usage("flags did not serialize to an object".into()));
    };
    let target = merged.as_object_mut().expect("settings serialize to objects");
    for (key, value) in flags {
        if matches.value_source(&key) != Some(ValueSource::CommandLine) {
            continue;
        }
        set_path(target, &key, value);
    }
    serde_json::from_value(merged).map_err(|e| Failure::usage(e.to_string()))
}

fn set_path(target: &mut Map<String, Value>, key: &str, value: Value) {
    if let Some(rest) = key.strip_prefix("nnls_") {
        if let Some(Value::Object(nested)) = target.get_mut("nnls") {
            nested.insert(rest.into(), value);
            return;
        }
    }
    target.insert(key.into(), value);
}
