use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use crate::{CliError, RunConfig};

/// Output directory whose CSVs all carry the same metadata header.
pub(crate) struct Output {
    dir: PathBuf,
    header: String,
}

impl Output {
    /// Creates the directory and writes the effective `config.toml`.
    pub(crate) fn create(dir: &Path, command: &str, cfg: &RunConfig) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        let toml = cfg.to_toml()?;
        fs::write(dir.join("config.toml"), &toml)?;
        let header = format!(
            "# polmem {}\n# command: {command}\n# seed: {}\n# config_sha256: {}\n",
            env!("CARGO_PKG_VERSION"),
            cfg.seed,
            cfg.hash()?
        );
        Ok(Self { dir: dir.to_path_buf(), header })
    }

    pub(crate) fn csv(
        &self,
        name: &str,
        body: impl FnOnce(&mut Vec<u8>) -> io::Result<()>,
    ) -> Result<PathBuf, CliError> {
        let mut buf = self.header.clone().into_bytes();
        body(&mut buf)?;
        let path = self.dir.join(name);
        let mut f = fs::File::create(&path)?;
        f.write_all(&buf)?;
        Ok(path)
    }

    pub(crate) fn dir(&self) -> &Path {
        &self.dir
    }
}
