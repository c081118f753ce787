//! `run_meta.json`: what produced a directory of artifacts.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

pub const RUN_META: &str = "run_meta.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub command: String,
    pub config_hash: String,
    /// The seed that drives this command's randomness.
    pub seed: u64,
    pub versions: BTreeMap<String, String>,
    /// Command-specific facts (backbone, view, counts).
    #[serde(default)]
    pub details: BTreeMap<String, serde_json::Value>,
    /// The full config, so the run can be repeated from this file alone.
    pub config: RunConfig,
}

impl RunMeta {
    pub fn new(command: &str, cfg: &RunConfig, seed: u64) -> Self {
        let versions = BTreeMap::from([
            ("crownscale".to_string(), env!("CARGO_PKG_VERSION").to_string()),
            ("format".to_string(), "1".to_string()),
        ]);
        RunMeta {
            command: command.into(),
            config_hash: cfg.hash(),
            seed,
            versions,
            details: BTreeMap::new(),
            config: cfg.clone(),
        }
    }

    pub fn detail(mut self, key: &str, value: impl Serialize) -> Self {
        self.details
            .insert(key.into(), serde_json::to_value(value).expect("detail serializes"));
        self
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(RUN_META);
        let text = serde_json::to_string_pretty(self).expect("run meta serializes");
        std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(RUN_META);
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Runtime(format!("malformed `{}`: {e}", path.display())))
    }
}
