//! `evaluate`: score one model (a trained checkpoint, or the generator's
//! closed-form optimal scorer) across the shift family drawn from the
//! evaluation pool; write the full report plus a plot-ready CSV.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use fairshift::domain::Score;
use fairshift::metrics::{evaluate_model, write_plot_csv, write_report_json, EvalParams};
use fairshift::predictor::load_checkpoint;
use fairshift::seeding::derive_seed;
use fairshift::synthgen::OracleScorer;

use crate::config::RunConfig;
use crate::errors::{CliError, CliResult};

use super::generate::{GeneratorSidecar, POOL_FILE, SIDECAR_FILE};
use super::{data_file, path_string, read_dataset, CommandArtifacts};

pub const REPORT_FILE: &str = "report.json";
pub const PLOT_FILE: &str = "plot.csv";

/// What to score: a trained checkpoint, or the generator-derived optimal
/// scorer rebuilt from the data directory's sidecar.
pub enum ModelSource {
    Checkpoint(PathBuf),
    Oracle,
}

pub fn run(
    cfg: &RunConfig,
    data_dir: &Path,
    source: &ModelSource,
    out: &Path,
) -> CliResult<CommandArtifacts> {
    let pool = read_dataset(data_dir, POOL_FILE)?;
    let params = EvalParams {
        family: cfg.evaluate.family(cfg.data.p_y1)?,
        n_per: cfg.evaluate.n_per,
        source: cfg.data.source_spec()?,
        bootstrap_b: cfg.evaluate.bootstrap,
        seed: derive_seed(cfg.seed, "eval"),
    };
    let name = cfg.evaluate.name.as_deref();

    let mut inputs = BTreeMap::new();
    inputs.insert("data".to_string(), vec![path_string(data_dir)]);

    let (scorer, model_name): (Box<dyn Score>, String) = match source {
        ModelSource::Checkpoint(path) => {
            let ckpt = load_checkpoint(path)
                .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
            if ckpt.model.input_dim != pool.feature_dim() {
                return Err(CliError::validation(format!(
                    "checkpoint {} expects {}-dimensional inputs but the pool has {} features",
                    path.display(),
                    ckpt.model.input_dim,
                    pool.feature_dim()
                )));
            }
            inputs.insert("checkpoint".to_string(), vec![path_string(path)]);
            let default_name = ckpt
                .train_config
                .map(|c| c.objective.name().to_string())
                .unwrap_or_else(|| "model".to_string());
            (
                Box::new(ckpt.model),
                name.map(str::to_string).unwrap_or(default_name),
            )
        }
        ModelSource::Oracle => {
            let sidecar_path = data_file(data_dir, SIDECAR_FILE)?;
            let sidecar = GeneratorSidecar::read(&sidecar_path)?;
            inputs.insert("generator".to_string(), vec![path_string(&sidecar_path)]);
            let oracle = OracleScorer::new(&sidecar.synth_config, &sidecar.source)?;
            (
                Box::new(oracle),
                name.map(str::to_string)
                    .unwrap_or_else(|| "oracle".to_string()),
            )
        }
    };

    let report = evaluate_model(&model_name, scorer.as_ref(), &pool, &params)?;

    let report_path = out.join(REPORT_FILE);
    let file = File::create(&report_path)
        .map_err(|e| CliError::runtime(format!("creating {}: {e}", report_path.display())))?;
    write_report_json(&report, BufWriter::new(file))?;

    let plot_path = out.join(PLOT_FILE);
    let file = File::create(&plot_path)
        .map_err(|e| CliError::runtime(format!("creating {}: {e}", plot_path.display())))?;
    write_plot_csv(std::slice::from_ref(&report), BufWriter::new(file))?;

    println!(
        "evaluate: {} over {} family members (n_per={}, bootstrap={}), \
         risk range {:.6}, eo {:.6}, dp {:.6} -> {}",
        report.model_name,
        report.per_dist.len(),
        params.n_per,
        params.bootstrap_b,
        report.robustness_range,
        report.eo_violation,
        report.dp_violation,
        out.display()
    );
    Ok((
        inputs,
        vec![REPORT_FILE.to_string(), PLOT_FILE.to_string()],
    ))
}
