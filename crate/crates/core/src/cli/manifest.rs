use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
}

/// Record of one CLI run. Everything except the timestamps is a function of
/// the resolved configuration and the input files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub tool_version: String,
    pub seed: u64,
    /// Fully resolved configuration; feeding it back through `--config`
    /// reproduces the run.
    pub config: serde_json::Value,
    pub out: PathBuf,
    pub outputs: Vec<OutputFile>,
    pub started_at: String,
    pub finished_at: String,
}

impl RunManifest {
    pub fn new(subcommand: &str, seed: u64, config: serde_json::Value, out: &Path) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config,
            out: out.to_path_buf(),
            outputs: Vec::new(),
            started_at: now(),
            finished_at: String::new(),
        }
    }

    /// Hashes `names` (relative to the output directory) and writes
    /// `manifest.json` next to them.
    pub fn finish(mut self, names: &[String]) -> std::io::Result<PathBuf> {
        self.outputs = names
            .iter()
            .map(|n| {
                let bytes = std::fs::read(self.out.join(n))?;
                Ok(OutputFile {
                    path: n.clone(),
                    sha256: hex::encode(Sha256::digest(&bytes)),
                })
            })
            .collect::<std::io::Result<_>>()?;
        self.finished_at = now();
        let path = self.out.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&self).expect("manifest serializes");
        std::fs::write(&path, text + "\n")?;
        Ok(path)
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}
