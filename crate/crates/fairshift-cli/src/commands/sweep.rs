//! `sweep`: train every grid candidate, gate MMD-penalized candidates on
//! the held-out invariance t-test, select the winner, and write the full
//! per-candidate table plus the winning checkpoint.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use fairshift::modelselect::{select, write_sweep_csv};
use fairshift::predictor::{save_checkpoint, Checkpoint};
use fairshift::seeding::derive_seed;
use fairshift::synthgen::split;

use crate::config::RunConfig;
use crate::errors::{CliError, CliResult};

use super::{path_string, read_dataset, CommandArtifacts};

pub const SWEEP_FILE: &str = "sweep.csv";
pub const SELECTED_FILE: &str = "selected.json";

pub fn run(cfg: &RunConfig, data_dir: &Path, out: &Path) -> CliResult<CommandArtifacts> {
    cfg.train.validate_fraction()?;
    let full = read_dataset(data_dir, super::generate::TRAIN_FILE)?;
    let (train_part, validation) = split(
        &full,
        cfg.train.train_fraction,
        derive_seed(cfg.seed, "split"),
    )?;
    let grid = cfg.sweep.grid(&cfg.train, full.feature_dim(), cfg.seed)?;

    let (selection, mut models) = select(&grid, &train_part, &validation, cfg.sweep.folds)?;

    let csv_path = out.join(SWEEP_FILE);
    let file = File::create(&csv_path)
        .map_err(|e| CliError::runtime(format!("creating {}: {e}", csv_path.display())))?;
    write_sweep_csv(&selection, BufWriter::new(file))?;

    let best = selection.best;
    let winner = models.remove(best);
    save_checkpoint(
        &Checkpoint {
            model: winner,
            train_config: Some(grid[best]),
        },
        &out.join(SELECTED_FILE),
    )?;

    if selection.no_passing {
        eprintln!(
            "warning: no candidate passed the invariance gate; \
             selected by penalized validation loss instead"
        );
    }
    let p = &selection.points[best];
    println!(
        "sweep: {} candidates, selected #{best} ({}, alpha={}, gamma={}, l2={}, \
         val_loss={:.6}) -> {}",
        selection.points.len(),
        p.config.objective.name(),
        p.config.alpha,
        p.config.kernel.bandwidth_gamma,
        p.config.l2,
        p.val_loss,
        out.display()
    );

    let mut inputs = BTreeMap::new();
    inputs.insert("data".to_string(), vec![path_string(data_dir)]);
    Ok((
        inputs,
        vec![SWEEP_FILE.to_string(), SELECTED_FILE.to_string()],
    ))
}
