use std::path::{Path, PathBuf};

use anyhow::Result;
use serde::Serialize;
use serde_json::Value;

use crate::args::GlobalArgs;

/// Record of one run: enough to repeat it.
#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub command: &'static str,
    pub version: &'static str,
    pub emb_format_version: u32,
    pub ckpt_format_version: u32,
    pub seed: Option<u64>,
    pub global: &'a GlobalArgs,
    pub args: Value,
    /// Fully resolved spec or plan(s).
    pub config: Value,
    pub outputs: Vec<PathBuf>,
}

impl<'a> Manifest<'a> {
    pub fn new(
        command: &'static str,
        global: &'a GlobalArgs,
        args: impl Serialize,
    ) -> Result<Self> {
        Ok(Self {
            command,
            version: env!("CARGO_PKG_VERSION"),
            emb_format_version: cmc_core::data::EMB_VERSION,
            ckpt_format_version: cmc_core::data::CKPT_VERSION,
            seed: global.seed,
            global,
            args: serde_json::to_value(args)?,
            config: Value::Null,
            outputs: Vec::new(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &(serde_json::to_string_pretty(self)? + "\n"))?;
        log::info!("wrote {}", path.display());
        Ok(())
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| cmc_core::Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    std::fs::write(path, text).map_err(|e| cmc_core::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}
