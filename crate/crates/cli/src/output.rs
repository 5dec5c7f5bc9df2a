//! Artifact directory with a manifest of everything written and read.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use kerrsim::Result;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub struct OutDir {
    root: PathBuf,
    artifacts: BTreeMap<String, String>,
    inputs: BTreeMap<String, Value>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            artifacts: BTreeMap::new(),
            inputs: BTreeMap::new(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        fs::write(self.root.join(name), bytes)?;
        self.artifacts.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_json(&mut self, name: &str, value: &Value) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Reads an input file and records its hash under `role`.
    pub fn read_input(&mut self, role: &str, path: &Path) -> Result<Vec<u8>> {
        let bytes = fs::read(path)?;
        self.record_input(role, path, &bytes);
        Ok(bytes)
    }

    pub fn record_input(&mut self, role: &str, path: &Path, bytes: &[u8]) {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        self.inputs
            .insert(role.to_string(), json!({ "file": name, "sha256": sha256_hex(bytes) }));
    }

    pub fn finish(mut self, command: &str, options: Value, seed: u64) -> Result<()> {
        let artifacts: Vec<Value> = self
            .artifacts
            .iter()
            .map(|(file, sha)| json!({ "file": file, "sha256": sha }))
            .collect();
        let manifest = json!({
            "command": command,
            "options": options,
            "seed": seed,
            "versions": {
                "kerrsim": kerrsim::VERSION,
                "kerrsim-cli": env!("CARGO_PKG_VERSION"),
            },
            "inputs": self.inputs,
            "artifacts": artifacts,
        });
        self.write_json("manifest.json", &manifest)
    }
}
