use std::path::Path;

use chrono::{SecondsFormat, Utc};
use serde::Serialize;

use crate::config::Config;
use crate::CliError;

/// Record of one CLI invocation, written as TOML next to its outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub version: String,
    pub command_line: Vec<String>,
    pub seed: u64,
    pub started: String,
    pub finished: Option<String>,
    pub complete: bool,
    pub outputs: Vec<String>,
    pub config: Config,
}

pub fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn start(config: &Config, seed: u64) -> Self {
        RunManifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            command_line: std::env::args().collect(),
            seed,
            started: now(),
            finished: None,
            complete: false,
            outputs: Vec::new(),
            config: config.clone(),
        }
    }

    pub fn finish(&mut self, complete: bool) {
        self.finished = Some(now());
        self.complete = complete;
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let text = toml::to_string(self).map_err(|e| CliError::Io(format!("manifest: {e}")))?;
        crate::write_file(path, &text)
    }
}
