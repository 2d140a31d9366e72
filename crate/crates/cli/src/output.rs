//! Output directory handling and the per-run JSON manifest.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ScenarioConfig;

pub const MANIFEST: &str = "manifest.json";

/// Collects the files written by one command.
pub struct OutDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)
            .with_context(|| format!("creating output directory {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    /// Writes `name` through `f`, buffered.
    pub fn write<F>(&mut self, name: &str, f: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    {
        let path = self.root.join(name);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(file);
        f(&mut w)
            .and_then(|_| w.flush())
            .with_context(|| format!("writing {}", path.display()))?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value).map_err(std::io::Error::other)?;
            writeln!(w)
        })
    }

    /// Writes the manifest; call last.
    pub fn finish(
        mut self,
        command: &str,
        config: &ScenarioConfig,
        seed: Option<u64>,
    ) -> Result<PathBuf> {
        let mut config = config.clone();
        config.out = None;
        let inputs = serde_json::json!({ "command": command, "config": config });
        let bytes = serde_json::to_vec(&inputs)?;
        let digest = Sha256::digest(&bytes);
        let hash: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        let manifest = Manifest {
            command: command.to_string(),
            inputs_hash: format!("sha256:{hash}"),
            seed,
            versions: Versions {
                cli: env!("CARGO_PKG_VERSION"),
                core: lepra_core::VERSION,
            },
            config,
            outputs: self.written.clone(),
        };
        self.write_json(MANIFEST, &manifest)?;
        Ok(self.root)
    }
}

#[derive(Serialize)]
struct Versions {
    cli: &'static str,
    core: &'static str,
}

#[derive(Serialize)]
struct Manifest {
    command: String,
    inputs_hash: String,
    seed: Option<u64>,
    versions: Versions,
    config: ScenarioConfig,
    outputs: Vec<String>,
}
