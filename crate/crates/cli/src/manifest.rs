use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use tergm_core::ingest::write_atomically;
use tergm_core::Result;

#[derive(Clone, Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// Provenance attached to every report.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    /// Fully resolved configuration, defaults included.
    pub config: Value,
    pub seed: Option<u64>,
    pub version: String,
    pub inputs: Vec<InputDigest>,
    pub threads: usize,
    pub wall_seconds: f64,
}

/// Collects inputs and settings while a command runs.
pub struct Run {
    command: String,
    started: Instant,
    inputs: Vec<InputDigest>,
    pub seed: Option<u64>,
    pub config: Value,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl Run {
    pub fn new(command: &str) -> Self {
        Run {
            command: command.into(),
            started: Instant::now(),
            inputs: Vec::new(),
            seed: None,
            config: Value::Null,
        }
    }

    /// Reads a text input and records its digest.
    pub fn read(&mut self, path: &Path) -> Result<String> {
        let bytes = fs::read(path)?;
        self.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: hex(&Sha256::digest(&bytes)),
        });
        String::from_utf8(bytes)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e).into())
    }

    pub fn manifest(&self) -> RunManifest {
        RunManifest {
            command: self.command.clone(),
            config: self.config.clone(),
            seed: self.seed,
            version: env!("CARGO_PKG_VERSION").into(),
            inputs: self.inputs.clone(),
            threads: rayon::current_num_threads(),
            wall_seconds: self.started.elapsed().as_secs_f64(),
        }
    }

    /// Writes `report` as JSON with the manifest under `"manifest"`.
    pub fn write_json<T: Serialize>(&self, path: &Path, report: &T) -> Result<()> {
        let manifest = serde_json::to_value(self.manifest())?;
        let doc = match serde_json::to_value(report)? {
            Value::Object(mut map) => {
                map.insert("manifest".into(), manifest);
                Value::Object(map)
            }
            other => json!({ "result": other, "manifest": manifest }),
        };
        write_atomically(path, serde_json::to_string_pretty(&doc)?.as_bytes())
    }

    /// Writes plot-ready CSV, with the manifest beside it in `<path>.manifest.json`.
    pub fn write_csv(&self, path: &Path, csv: &str) -> Result<()> {
        write_atomically(path, csv.as_bytes())?;
        let mut sidecar = path.as_os_str().to_owned();
        sidecar.push(".manifest.json");
        write_atomically(
            Path::new(&sidecar),
            serde_json::to_string_pretty(&self.manifest())?.as_bytes(),
        )
    }
}
