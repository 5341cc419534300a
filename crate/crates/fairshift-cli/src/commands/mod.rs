//! One module per subcommand. Each command returns the labeled inputs and
//! the list of files it wrote, which `main` folds into the run manifest.

pub mod evaluate;
pub mod generate;
pub mod report;
pub mod stability;
pub mod sweep;
pub mod train;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use fairshift::domain::{read_csv_path, Dataset};

use crate::errors::{CliError, CliResult};

/// (input paths by role, output file names) for the manifest.
pub type CommandArtifacts = (BTreeMap<String, Vec<String>>, Vec<String>);

pub(crate) fn path_string(p: &Path) -> String {
    p.display().to_string()
}

/// Resolve a required file inside the `--data` directory.
pub(crate) fn data_file(data_dir: &Path, name: &str) -> CliResult<PathBuf> {
    let p = data_dir.join(name);
    if !p.is_file() {
        return Err(CliError::runtime(format!(
            "data directory {} has no {name} (run `generate` first?)",
            data_dir.display()
        )));
    }
    Ok(p)
}

pub(crate) fn read_dataset(data_dir: &Path, name: &str) -> CliResult<Dataset> {
    let p = data_file(data_dir, name)?;
    read_csv_path(&p).map_err(|e| CliError::runtime(format!("{}: {e}", p.display())))
}
