//! Run manifests: everything needed to reproduce an output.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const FILE_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub subcommand: String,
    pub seed: Option<u64>,
    /// The fully resolved flags, defaults included.
    pub params: serde_json::Value,
    /// Keyed by flag name.
    pub inputs: BTreeMap<String, InputDigest>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl RunManifest {
    pub fn new<P: Serialize>(subcommand: &str, seed: Option<u64>, params: &P) -> Result<Self> {
        Ok(Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            subcommand: subcommand.to_string(),
            seed,
            params: serde_json::to_value(params).map_err(|e| Error::Usage(e.to_string()))?,
            inputs: BTreeMap::new(),
        })
    }

    pub fn input(mut self, flag: &str, path: &Path) -> Result<Self> {
        let sha256 = sha256_file(path)?;
        self.inputs.insert(
            flag.to_string(),
            InputDigest {
                path: path.to_path_buf(),
                sha256,
            },
        );
        Ok(self)
    }

    pub fn optional_input(self, flag: &str, path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => self.input(flag, p),
            None => Ok(self),
        }
    }

    /// Fails if any recorded input no longer has its recorded digest.
    pub fn verify_inputs(&self) -> Result<()> {
        for (flag, d) in &self.inputs {
            let now = sha256_file(&d.path)?;
            if now != d.sha256 {
                return Err(Error::format(
                    &d.path,
                    format!("--{flag} digest changed: manifest has {}, file has {now}", d.sha256),
                ));
            }
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| Error::Usage(e.to_string()))?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }
}

/// `<out>.manifest.json` next to a file output.
pub fn path_for_file(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

/// `manifest.json` inside a directory output.
pub fn path_for_dir(out: &Path) -> PathBuf {
    out.join(FILE_NAME)
}
