//! Run manifests: enough to re-run a command and byte-compare its outputs.
//! Deliberately free of timestamps and host details.

use std::collections::BTreeMap;
use std::path::Path;

use offrec_core::{Error, Result};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, serde::Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    /// Input path, as given on the command line, to the SHA-256 of its bytes.
    pub inputs: BTreeMap<String, String>,
    /// The fully resolved configuration the command actually ran with.
    pub config: serde_json::Value,
    /// File names written next to this manifest.
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str) -> Manifest {
        Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            inputs: BTreeMap::new(),
            config: serde_json::Value::Null,
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    pub fn config_of<T: serde::Serialize>(&mut self, cfg: &T) -> Result<()> {
        self.config = serde_json::to_value(cfg)
            .map_err(|e| Error::data(format!("manifest config encode: {e}")))?;
        Ok(())
    }

    pub fn output(&mut self, name: &str) {
        self.outputs.push(name.to_string());
    }

    /// Writes `manifest.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::data(format!("manifest encode: {e}")))?;
        text.push('\n');
        std::fs::write(dir.join(MANIFEST_FILE), text)?;
        Ok(())
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = std::fs::File::open(path)
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    let mut hasher = Sha256::new();
    std::io::copy(&mut file, &mut hasher)?;
    Ok(format!("{:x}", hasher.finalize()))
}
