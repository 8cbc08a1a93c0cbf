//! Run manifests written next to every output directory.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub seed: Option<u64>,
    pub config_paths: Vec<PathBuf>,
    pub output_paths: Vec<PathBuf>,
    pub tool_version: &'static str,
    /// Seconds since the Unix epoch; the only field that differs between reruns.
    pub timestamp: u64,
}

impl RunManifest {
    pub fn new(command: &str, argv: &[String], seed: Option<u64>) -> Self {
        Self {
            command: command.to_string(),
            args: argv.iter().skip(1).cloned().collect(),
            seed,
            config_paths: Vec::new(),
            output_paths: Vec::new(),
            tool_version: env!("CARGO_PKG_VERSION"),
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    pub fn config(&mut self, path: impl Into<PathBuf>) {
        self.config_paths.push(path.into());
    }
}

/// Writes `files` into `dir` and a `manifest.json` listing them.
pub fn write_outputs(dir: &Path, mut manifest: RunManifest, files: &[(&str, &str)]) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (name, contents) in files {
        let path = dir.join(name);
        std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        manifest.output_paths.push(path);
    }
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)? + "\n";
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
