use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Record of one invocation: enough to re-run it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command_line: String,
    /// Arguments after the program name, verbatim.
    pub args: Vec<String>,
    pub config: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub artifacts: Vec<String>,
    pub timestamp: String,
}

impl RunManifest {
    pub fn new(args: &[String], config: BTreeMap<String, String>, seed: Option<u64>) -> Self {
        RunManifest {
            command_line: std::iter::once("lograph".to_string())
                .chain(args.iter().cloned())
                .collect::<Vec<_>>()
                .join(" "),
            args: args.to_vec(),
            config,
            seed,
            artifacts: Vec::new(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: not a run manifest: {e}", path.display())))
    }

    /// Stored arguments with the output location swapped for `out`.
    pub fn args_with_out(&self, out: &str) -> Vec<String> {
        let mut args = self.args.clone();
        let mut i = 0;
        let mut replaced = false;
        while i < args.len() {
            if args[i] == "--out" && i + 1 < args.len() {
                args[i + 1] = out.to_string();
                replaced = true;
                i += 2;
                continue;
            }
            if args[i].starts_with("--out=") {
                args[i] = format!("--out={out}");
                replaced = true;
            }
            i += 1;
        }
        if !replaced {
            args.push("--out".into());
            args.push(out.into());
        }
        args
    }
}
