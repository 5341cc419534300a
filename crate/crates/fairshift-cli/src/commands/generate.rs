//! `generate`: sample a training table at the source joint and an
//! attribute-balanced evaluation pool, plus a JSON sidecar describing the
//! generator so the closed-form reference scorer can be rebuilt later.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use fairshift::domain::{write_csv_path, JointSpec};
use fairshift::seeding::derive_seed;
use fairshift::synthgen::{generate, SynthConfig};

use crate::config::RunConfig;
use crate::errors::{CliError, CliResult};

use super::CommandArtifacts;

pub const TRAIN_FILE: &str = "train.csv";
pub const POOL_FILE: &str = "pool.csv";
pub const SIDECAR_FILE: &str = "generator.json";

/// Everything needed to rebuild the generator and its optimal scorer:
/// the full synthetic config (mixing matrix materialized) and the joints
/// the two datasets were drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSidecar {
    pub synth_config: SynthConfig,
    /// Joint of the training table.
    pub source: JointSpec,
    /// Joint of the evaluation pool.
    pub neutral: JointSpec,
    pub n_train: usize,
    pub n_pool: usize,
}

impl GeneratorSidecar {
    pub fn write(&self, path: &Path) -> CliResult<()> {
        let mut buf = serde_json::to_vec_pretty(self)
            .map_err(|e| CliError::runtime(format!("serializing {}: {e}", path.display())))?;
        buf.push(b'\n');
        std::fs::write(path, buf)
            .map_err(|e| CliError::runtime(format!("writing {}: {e}", path.display())))
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::runtime(format!("reading {}: {e}", path.display())))?;
        serde_json::from_slice(&bytes)
            .map_err(|e| CliError::runtime(format!("parsing {}: {e}", path.display())))
    }
}

pub fn run(cfg: &RunConfig, out: &Path) -> CliResult<CommandArtifacts> {
    let data = &cfg.data;
    let base = data.synth_config(cfg.seed)?;
    let source = data.source_spec()?;
    let neutral = data.neutral_spec()?;

    // Same world (geometry + mixing matrix), independent example streams.
    let train_gen = SynthConfig {
        seed: derive_seed(cfg.seed, "train-data"),
        ..base.clone()
    };
    let pool_gen = SynthConfig {
        seed: derive_seed(cfg.seed, "pool-data"),
        ..base.clone()
    };
    let train = generate(&train_gen, &source, data.n_train)?;
    let pool = generate(&pool_gen, &neutral, data.n_pool)?;

    write_csv_path(&train, &out.join(TRAIN_FILE))?;
    write_csv_path(&pool, &out.join(POOL_FILE))?;
    GeneratorSidecar {
        synth_config: base,
        source,
        neutral,
        n_train: data.n_train,
        n_pool: data.n_pool,
    }
    .write(&out.join(SIDECAR_FILE))?;

    println!(
        "generate: {} training rows at (p_y1={}, mu={}), {} pool rows at mu=0.5 -> {}",
        data.n_train,
        data.p_y1,
        data.mu,
        data.n_pool,
        out.display()
    );
    Ok((
        BTreeMap::new(),
        vec![
            TRAIN_FILE.to_string(),
            POOL_FILE.to_string(),
            SIDECAR_FILE.to_string(),
        ],
    ))
}
