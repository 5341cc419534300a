//! `report`: merge evaluation reports into one plot-ready CSV, one row per
//! (model, family member), so several models can be drawn on one figure.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use fairshift::metrics::{write_plot_csv, EvalReport};

use crate::errors::{CliError, CliResult};

use super::{path_string, CommandArtifacts};

pub const PLOT_FILE: &str = "plot.csv";

pub fn run(report_paths: &[PathBuf], out: &Path) -> CliResult<CommandArtifacts> {
    if report_paths.is_empty() {
        return Err(CliError::validation("pass at least one --report"));
    }
    let mut inputs = BTreeMap::new();
    inputs.insert(
        "report".to_string(),
        report_paths.iter().map(|p| path_string(p)).collect(),
    );
    let mut reports = Vec::with_capacity(report_paths.len());
    for path in report_paths {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::runtime(format!("reading {}: {e}", path.display())))?;
        let report: EvalReport = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::runtime(format!("parsing {}: {e}", path.display())))?;
        reports.push(report);
    }

    let plot_path = out.join(PLOT_FILE);
    let file = File::create(&plot_path)
        .map_err(|e| CliError::runtime(format!("creating {}: {e}", plot_path.display())))?;
    write_plot_csv(&reports, BufWriter::new(file))?;

    let rows: usize = reports.iter().map(|r| r.per_dist.len()).sum();
    println!(
        "report: merged {} reports into {} rows -> {}",
        reports.len(),
        rows,
        out.display()
    );
    Ok((inputs, vec![PLOT_FILE.to_string()]))
}
