//! Report envelopes and plot-ready tables.
//!
//! Every report is one JSON document:
//! `{command, payload, inputs, config, provenance}`. The payload depends only
//! on inputs, config and providers; wall-clock and host details live in
//! `provenance`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use twin_core::util::sha256_file;

use crate::config::RunConfig;
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub created_at: String,
    pub tool_version: String,
    pub generation_provider: Option<String>,
    pub embedding_provider: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub command: String,
    pub payload: Value,
    pub inputs: BTreeMap<String, InputFile>,
    pub config: RunConfig,
    pub provenance: Provenance,
}

/// Collects hashed input files for one command.
#[derive(Debug, Default)]
pub struct Inputs(BTreeMap<String, InputFile>);

impl Inputs {
    pub fn add(&mut self, label: &str, path: &Path) -> Result<(), CliError> {
        let sha256 = sha256_file(path).map_err(|e| CliError::Data(format!("cannot hash {}: {e}", path.display())))?;
        self.0.insert(
            label.to_string(),
            InputFile {
                path: path.display().to_string(),
                sha256,
            },
        );
        Ok(())
    }
}

/// Output directory plus the bookkeeping shared by every report it holds.
pub struct Sink<'a> {
    pub dir: PathBuf,
    pub command: String,
    pub config: &'a RunConfig,
    pub generation_provider: Option<String>,
    pub embedding_provider: Option<String>,
}

impl Sink<'_> {
    pub fn create(&self) -> Result<(), CliError> {
        std::fs::create_dir_all(&self.dir)
            .map_err(|e| CliError::Data(format!("cannot create {}: {e}", self.dir.display())))
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Writes `<name>` as a report envelope around `payload`.
    pub fn report<T: Serialize>(&self, name: &str, payload: &T, inputs: Inputs) -> Result<PathBuf, CliError> {
        let report = Report {
            command: self.command.clone(),
            payload: serde_json::to_value(payload).map_err(|e| CliError::Data(e.to_string()))?,
            inputs: inputs.0,
            config: self.config.clone(),
            provenance: Provenance {
                created_at: chrono::Utc::now().to_rfc3339(),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                generation_provider: self.generation_provider.clone(),
                embedding_provider: self.embedding_provider.clone(),
            },
        };
        let path = self.path(name);
        let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Data(e.to_string()))?;
        std::fs::write(&path, text + "\n").map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }

    /// Writes a CSV table with the given header.
    pub fn table(&self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        let fail = |e: csv::Error| CliError::Data(format!("cannot write {}: {e}", path.display()));
        let mut w = csv::Writer::from_path(&path).map_err(fail)?;
        w.write_record(header).map_err(fail)?;
        for r in rows {
            w.write_record(r).map_err(fail)?;
        }
        w.flush().map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }

    pub fn jsonl<T: Serialize>(&self, name: &str, records: &[T]) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        twin_core::corpus::write_jsonl(&path, records).map_err(|e| CliError::Data(e.to_string()))?;
        Ok(path)
    }
}

/// Reads a document that is either a report envelope (its payload is
/// returned) or a bare JSON document.
pub fn read_payload<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut value: Value =
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("invalid JSON in {}: {e}", path.display())))?;
    let is_envelope = value
        .as_object()
        .is_some_and(|o| o.contains_key("provenance") && o.contains_key("payload"));
    if is_envelope {
        value = value["payload"].take();
    }
    serde_json::from_value(value).map_err(|e| CliError::Data(format!("unexpected document in {}: {e}", path.display())))
}

/// Shortest round-trip decimal for a float; empty for NaN.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x}")
    }
}
