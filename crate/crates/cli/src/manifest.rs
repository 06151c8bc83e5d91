use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;

use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Record of one invocation. `stage_wall_time_s` is the only field that
/// differs between identical runs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command_line: Vec<String>,
    pub command: String,
    pub config: Value,
    pub seed: u64,
    pub versions: BTreeMap<String, String>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub counters: BTreeMap<String, u64>,
    pub stage_wall_time_s: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn new(command: &str, config: Value, seed: u64) -> Self {
        let versions = BTreeMap::from([
            ("syncmatch".to_string(), syncmatch::VERSION.to_string()),
            (
                "syncmatch-cli".to_string(),
                env!("CARGO_PKG_VERSION").to_string(),
            ),
        ]);
        Self {
            command_line: std::env::args().collect(),
            command: command.to_string(),
            config,
            seed,
            versions,
            inputs: Vec::new(),
            outputs: Vec::new(),
            counters: BTreeMap::new(),
            stage_wall_time_s: BTreeMap::new(),
        }
    }

    /// Runs `f` and records its wall time under `stage`.
    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.stage_wall_time_s
            .insert(stage.to_string(), start.elapsed().as_secs_f64());
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).expect("manifest is plain data");
        std::fs::write(path, text + "\n").map_err(|e| CliError::io(&path.display().to_string(), e))
    }
}
