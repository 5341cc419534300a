//! Run provenance. Every command drops a `manifest.json` into its output
//! directory; the recorded resolved config, seed, and input paths are
//! sufficient to rerun the command and reproduce every artifact
//! byte-for-byte. Only `timestamp` (and, across reruns, `config_path` /
//! `overrides`, which are folded into `resolved_config`) may differ.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::errors::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// Subcommand that ran.
    pub command: String,
    /// The --config argument as given, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_path: Option<String>,
    /// Input paths by role (data directory, checkpoints, reports); list
    /// order is the flag order on the command line.
    pub inputs: BTreeMap<String, Vec<String>>,
    /// Files written to the output directory (sorted; manifest excluded).
    pub outputs: Vec<String>,
    /// Effective root seed after the --seed flag.
    pub seed: u64,
    /// --set overrides as given; already applied inside `resolved_config`.
    pub overrides: Vec<String>,
    /// The fully resolved configuration, as TOML text.
    pub resolved_config: String,
    pub tool_version: String,
    /// Wall-clock provenance only.
    pub timestamp: String,
}

pub fn write_manifest(manifest: &RunManifest, out_dir: &Path) -> CliResult<()> {
    let path = out_dir.join(MANIFEST_FILE);
    let mut buf = serde_json::to_vec_pretty(manifest)
        .map_err(|e| CliError::runtime(format!("serializing manifest: {e}")))?;
    buf.push(b'\n');
    std::fs::write(&path, buf)
        .map_err(|e| CliError::runtime(format!("writing {}: {e}", path.display())))
}
