//! `stability`: for each checkpoint, tabulate the representation's
//! label-conditional MMD (one row per y-slice) and its balancing-weighted
//! marginal MMD, on each of the train split, the validation split, and a
//! fresh test set drawn from the source joint. Comparing the train and
//! test rows shows how far each model's invariance estimate generalizes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use fairshift::domain::Dataset;
use fairshift::kernelmmd::{mmd2_v, mmd2_weighted};
use fairshift::predictor::load_checkpoint;
use fairshift::seeding::derive_seed;
use fairshift::synthgen::{split, subsample_to_spec};
use fairshift::train::estimate_weights_from;
use fairshift::{KernelConfig, Predictor};

use crate::config::RunConfig;
use crate::errors::{CliError, CliResult};

use super::generate::{POOL_FILE, TRAIN_FILE};
use super::{path_string, read_dataset, CommandArtifacts};

pub const STABILITY_FILE: &str = "stability.csv";

pub fn run(
    cfg: &RunConfig,
    data_dir: &Path,
    checkpoints: &[PathBuf],
    out: &Path,
) -> CliResult<CommandArtifacts> {
    if checkpoints.is_empty() {
        return Err(CliError::validation("pass at least one --checkpoint"));
    }
    cfg.train.validate_fraction()?;
    let full = read_dataset(data_dir, TRAIN_FILE)?;
    let (train_part, validation) = split(
        &full,
        cfg.train.train_fraction,
        derive_seed(cfg.seed, "split"),
    )?;
    let pool = read_dataset(data_dir, POOL_FILE)?;
    let test = subsample_to_spec(
        &pool,
        &cfg.data.source_spec()?,
        cfg.evaluate.n_per,
        derive_seed(cfg.seed, "stability-test"),
    )?;
    // Deployment-style weighting: balancing weights are estimated once from
    // the fitting split and reused on every split, as a trained weighted
    // model would.
    let weights = estimate_weights_from(&train_part)?;

    let csv_path = out.join(STABILITY_FILE);
    let mut w = csv::Writer::from_path(&csv_path)
        .map_err(|e| CliError::runtime(format!("creating {}: {e}", csv_path.display())))?;
    w.write_record(["model", "split", "statistic", "y_slice", "value"])
        .map_err(|e| CliError::runtime(e.to_string()))?;

    let names = unique_names(checkpoints);
    let mut inputs = BTreeMap::new();
    inputs.insert("data".to_string(), vec![path_string(data_dir)]);
    inputs.insert(
        "checkpoint".to_string(),
        checkpoints.iter().map(|p| path_string(p)).collect(),
    );
    let splits: [(&str, &Dataset); 3] = [
        ("train", &train_part),
        ("validation", &validation),
        ("test", &test),
    ];

    for (path, name) in checkpoints.iter().zip(&names) {
        let ckpt = load_checkpoint(path)
            .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
        let kernel = ckpt
            .train_config
            .map(|c| c.kernel)
            .unwrap_or(KernelConfig {
                bandwidth_gamma: 10.0,
            });
        if ckpt.model.input_dim != full.feature_dim() {
            return Err(CliError::validation(format!(
                "checkpoint {} expects {}-dimensional inputs but the data has {} features",
                path.display(),
                ckpt.model.input_dim,
                full.feature_dim()
            )));
        }

        for (split_name, data) in splits {
            let reprs = representations(&ckpt.model, data)?;
            // Per-y-slice conditional MMD between attribute groups.
            for y in 0..2u8 {
                let g0 = group(data, &reprs, |l, a| l == y && a == 0);
                let g1 = group(data, &reprs, |l, a| l == y && a == 1);
                let value = if g0.is_empty() || g1.is_empty() {
                    eprintln!(
                        "warning: {name}/{split_name}: label slice y={y} is missing an \
                         attribute group; writing NaN"
                    );
                    f64::NAN
                } else {
                    mmd2_v(&g0, &g1, &kernel)?
                };
                write_row(&mut w, name, split_name, "conditional_mmd", &y.to_string(), value)?;
            }
            // Balancing-weighted marginal MMD between attribute groups.
            let g0 = group(data, &reprs, |_, a| a == 0);
            let g1 = group(data, &reprs, |_, a| a == 1);
            let value = if g0.is_empty() || g1.is_empty() {
                eprintln!(
                    "warning: {name}/{split_name}: an attribute group is empty; writing NaN"
                );
                f64::NAN
            } else {
                let w0 = example_weights(data, &weights, 0);
                let w1 = example_weights(data, &weights, 1);
                mmd2_weighted(&g0, &w0, &g1, &w1, &kernel)?
            };
            write_row(&mut w, name, split_name, "weighted_marginal_mmd", "all", value)?;
        }
    }
    w.flush()
        .map_err(|e| CliError::runtime(format!("writing {}: {e}", csv_path.display())))?;

    println!(
        "stability: {} checkpoints x 3 splits -> {}",
        checkpoints.len(),
        out.display()
    );
    Ok((inputs, vec![STABILITY_FILE.to_string()]))
}

fn representations(model: &Predictor, data: &Dataset) -> CliResult<Vec<Vec<f64>>> {
    data.iter()
        .map(|e| model.forward_repr(&e.features).map_err(CliError::from))
        .collect()
}

fn group<'r>(
    data: &Dataset,
    reprs: &'r [Vec<f64>],
    keep: impl Fn(u8, u8) -> bool,
) -> Vec<&'r [f64]> {
    data.iter()
        .zip(reprs)
        .filter(|(e, _)| keep(e.label, e.attribute))
        .map(|(_, r)| r.as_slice())
        .collect()
}

fn example_weights(
    data: &Dataset,
    weights: &fairshift::BalancingWeights,
    attribute: u8,
) -> Vec<f64> {
    data.iter()
        .filter(|e| e.attribute == attribute)
        .map(|e| weights.get(e.label, e.attribute))
        .collect()
}

fn write_row<W: std::io::Write>(
    w: &mut csv::Writer<W>,
    model: &str,
    split: &str,
    statistic: &str,
    y_slice: &str,
    value: f64,
) -> CliResult<()> {
    w.write_record([model, split, statistic, y_slice, &value.to_string()])
        .map_err(|e| CliError::runtime(e.to_string()))
}

/// Checkpoint file stems, disambiguated with a numeric suffix on collision,
/// used as the `model` column.
fn unique_names(paths: &[PathBuf]) -> Vec<String> {
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    paths
        .iter()
        .map(|p| {
            let stem = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "model".to_string());
            let n = seen.entry(stem.clone()).or_insert(0);
            *n += 1;
            if *n == 1 {
                stem
            } else {
                format!("{stem}-{n}")
            }
        })
        .collect()
}
