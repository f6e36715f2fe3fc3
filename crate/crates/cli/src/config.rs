use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::{Cli, CliError, Result};

/// Everything needed to re-derive a run's artifacts.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig<'a> {
    pub tool_version: &'static str,
    pub command: &'static str,
    pub seed: u64,
    pub out: &'a Path,
    pub args: &'a Cli,
}

impl<'a> RunConfig<'a> {
    pub fn new(cli: &'a Cli) -> Self {
        Self { tool_version: env!("CARGO_PKG_VERSION"), command: cli.command.name(), seed: cli.seed, out: &cli.out, args: cli }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// Output directory of one run.
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|source| CliError::File { path: root.to_path_buf(), source })?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Writes a file through a buffered writer.
    pub fn write(&self, name: &str, f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<PathBuf> {
        let path = self.path(name);
        let io = |source| CliError::File { path: path.clone(), source };
        let mut w = BufWriter::new(fs::File::create(&path).map_err(io)?);
        f(&mut w).map_err(io)?;
        w.flush().map_err(io)?;
        Ok(path)
    }

    pub fn write_str(&self, name: &str, text: &str) -> Result<PathBuf> {
        self.write(name, |w| w.write_all(text.as_bytes()))
    }
}
