//! Shared fixtures for the integration and acceptance tests: a reusable
//! synthetic "world" (generator config, training data, evaluation pool) built
//! from a single root seed through named derivation, so every test run is
//! bit-reproducible.

// Not every test target uses every helper.
#![allow(dead_code)]

use fairshift::domain::{Dataset, JointSpec};
use fairshift::predictor::Arch;
use fairshift::seeding::derive_seed;
use fairshift::synthgen::{generate, shift_family, split, subsample_to_spec, SynthConfig};
use fairshift::train::{Objective, TrainConfig};

pub const N_TRAIN: usize = 2000;
pub const N_POOL: usize = 30_000;
pub const N_PER: usize = 3000;

pub fn source_spec() -> JointSpec {
    JointSpec::new(0.3, 0.9).unwrap()
}

pub fn neutral_spec() -> JointSpec {
    JointSpec::new(0.3, 0.5).unwrap()
}

pub fn family() -> Vec<JointSpec> {
    shift_family(0.3)
}

/// Everything a single-seed experiment needs. The generator (and with it the
/// mixing matrix) is shared between the training stream and the evaluation
/// pool; only the example streams differ.
pub struct World {
    pub base: SynthConfig,
    pub train: Dataset,
    pub validation: Dataset,
    pub pool: Dataset,
    pub source_test: Dataset,
    pub seed: u64,
}

pub fn build_world(seed: u64) -> World {
    let base = SynthConfig::default_with_seed(derive_seed(seed, "base"));
    let train_cfg = SynthConfig {
        seed: derive_seed(seed, "train-data"),
        ..base.clone()
    };
    let pool_cfg = SynthConfig {
        seed: derive_seed(seed, "pool-data"),
        ..base.clone()
    };
    let full_train = generate(&train_cfg, &source_spec(), N_TRAIN).unwrap();
    let (train, validation) = split(&full_train, 0.8, derive_seed(seed, "split")).unwrap();
    let pool = generate(&pool_cfg, &neutral_spec(), N_POOL).unwrap();
    let source_test =
        subsample_to_spec(&pool, &source_spec(), N_PER, derive_seed(seed, "src")).unwrap();
    World {
        base,
        train,
        validation,
        pool,
        source_test,
        seed,
    }
}

pub fn default_cfg(objective: Objective, world: &World) -> TrainConfig {
    TrainConfig {
        seed: derive_seed(world.seed, "fit"),
        ..TrainConfig::defaults(objective, Arch::Linear, world.base.total_dim())
    }
}

/// Print the one-line verdict for an acceptance criterion and panic on
/// failure so the suite reports it.
pub fn verdict(id: u32, name: &str, pass: bool, details: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    println!("ACCEPTANCE C{id:02} {name}: {status} ({details})");
    assert!(pass, "acceptance criterion C{id:02} {name} failed: {details}");
}
