use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::args::Command;
use crate::{read_file, write_file, CliError};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

/// Everything needed to re-run a command and check its outputs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub command: Command,
    /// Fully resolved configuration (file values with flag overrides applied).
    pub resolved: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<FileDigest>,
    /// Relative to the output root (the output directory, or the directory
    /// holding the output file).
    pub outputs: Vec<FileDigest>,
    /// Written alongside but not reproducible, e.g. wall-clock timings.
    #[serde(default)]
    pub unstable_outputs: Vec<PathBuf>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn digest_file(path: &Path) -> Result<String, CliError> {
    Ok(sha256_hex(&read_file(path)?))
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let bytes = read_file(path)?;
        serde_json::from_slice(&bytes).map_err(|e| CliError::Usage(format!("{}: not a manifest: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self).map_err(mieo::Error::from)?;
        text.push('\n');
        write_file(path, text.as_bytes())
    }
}
