//! Run manifests: everything needed to reproduce an output directory.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Context;
use rtaprop::config::RunConfig;
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: &'static str,
    pub version: &'static str,
    pub seed: u64,
    pub config: RunConfig,
    /// Input name → sha256 of its bytes.
    pub inputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &'static str, config: &RunConfig) -> Self {
        Self {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed: config.seed,
            config: config.clone(),
            inputs: BTreeMap::new(),
        }
    }

    pub fn record(&mut self, name: impl Into<String>, bytes: &[u8]) {
        self.inputs.insert(name.into(), hex::encode(Sha256::digest(bytes)));
    }

    pub fn write(&self, out_dir: &Path) -> anyhow::Result<()> {
        let path = out_dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}
