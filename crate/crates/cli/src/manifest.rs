use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub config: serde_json::Value,
    /// SHA-256 of the compact JSON encoding of `config`.
    pub config_hash: String,
    pub outputs: Vec<PathBuf>,
}

impl<'a> Manifest<'a> {
    pub fn new(command: &'a str, config: &impl Serialize, outputs: Vec<PathBuf>) -> Result<Self> {
        let config = serde_json::to_value(config)?;
        let digest = Sha256::digest(serde_json::to_vec(&config)?);
        Ok(Self {
            tool: env!("CARGO_PKG_NAME"),
            version: snpsynth_core::VERSION,
            command,
            config,
            config_hash: hex::encode(digest),
            outputs,
        })
    }

    /// Written beside `primary` as `<stem>.manifest.json`.
    pub fn write_beside(&self, primary: &Path) -> Result<PathBuf> {
        let stem = primary.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let path = primary.with_file_name(format!("{stem}.manifest.json"));
        write_json(&path, self)?;
        Ok(path)
    }
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}
