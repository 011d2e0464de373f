use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{hex_digest, RunConfig};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of_file(path: &Path) -> CliResult<Self> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        Ok(Self {
            path: path.display().to_string(),
            sha256: hex_digest(&bytes),
        })
    }
}

/// Written last by every command. Holds no timestamps, so identical runs
/// produce identical manifests.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config_sha256: String,
    pub config: RunConfig,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub details: serde_json::Value,
}

/// Output directory that records a digest of every file written into it.
pub struct Outputs {
    root: PathBuf,
    files: Vec<FileDigest>,
}

impl Outputs {
    pub fn create(root: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, relative: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        let path = self.root.join(relative);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.files.retain(|f| f.path != relative);
        self.files.push(FileDigest {
            path: relative.to_string(),
            sha256: hex_digest(bytes),
        });
        Ok(path)
    }

    /// Records a file that was written under the root by other means.
    pub fn record(&mut self, relative: &str) -> CliResult<()> {
        let path = self.root.join(relative);
        let bytes = std::fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        self.files.retain(|f| f.path != relative);
        self.files.push(FileDigest {
            path: relative.to_string(),
            sha256: hex_digest(&bytes),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, relative: &str, value: &T) -> CliResult<PathBuf> {
        let mut text = serde_json::to_string_pretty(value).map_err(smattn::Error::from)?;
        text.push('\n');
        self.write(relative, text.as_bytes())
    }

    pub fn finish(
        mut self,
        command: &str,
        config: &RunConfig,
        inputs: Vec<FileDigest>,
        details: serde_json::Value,
    ) -> CliResult<PathBuf> {
        let manifest = Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed,
            config_sha256: config.sha256(),
            config: config.clone(),
            inputs,
            outputs: std::mem::take(&mut self.files),
            details,
        };
        self.write_json("manifest.json", &manifest)
    }
}
