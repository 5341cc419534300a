//! `train`: fit one predictor on the fitting share of the training table
//! and write a checkpoint plus the per-epoch log. The train/validation
//! split is derived from the root seed, so `sweep` and `stability` see the
//! same partition under the same config.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use fairshift::predictor::{save_checkpoint, Checkpoint};
use fairshift::seeding::derive_seed;
use fairshift::synthgen::split;
use fairshift::train::fit;

use crate::config::RunConfig;
use crate::errors::{CliError, CliResult};

use super::{path_string, read_dataset, CommandArtifacts};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const TRAINLOG_FILE: &str = "trainlog.jsonl";

pub fn run(cfg: &RunConfig, data_dir: &Path, out: &Path) -> CliResult<CommandArtifacts> {
    cfg.train.validate_fraction()?;
    let full = read_dataset(data_dir, super::generate::TRAIN_FILE)?;
    let (fit_part, _validation) = split(
        &full,
        cfg.train.train_fraction,
        derive_seed(cfg.seed, "split"),
    )?;
    let train_cfg = cfg
        .train
        .train_config(cfg.train.objective, full.feature_dim(), cfg.seed)?;

    let (model, log) = fit(&fit_part, &train_cfg)?;

    save_checkpoint(
        &Checkpoint {
            model,
            train_config: Some(train_cfg),
        },
        &out.join(CHECKPOINT_FILE),
    )?;
    let log_path = out.join(TRAINLOG_FILE);
    let file = File::create(&log_path)
        .map_err(|e| CliError::runtime(format!("creating {}: {e}", log_path.display())))?;
    log.write_jsonl(BufWriter::new(file))?;

    let last = log.epochs.last();
    println!(
        "train: {} on {} rows, {} epochs, final objective {} -> {}",
        train_cfg.objective.name(),
        fit_part.len(),
        train_cfg.epochs,
        last.map(|r| r.objective.to_string())
            .unwrap_or_else(|| "n/a".into()),
        out.display()
    );

    let mut inputs = BTreeMap::new();
    inputs.insert("data".to_string(), vec![path_string(data_dir)]);
    Ok((
        inputs,
        vec![CHECKPOINT_FILE.to_string(), TRAINLOG_FILE.to_string()],
    ))
}
