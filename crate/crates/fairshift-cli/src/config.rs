//! Run configuration: one TOML file with nested sections, dotted-path
//! `--set` overrides, and defaults for every field so an absent config file
//! is a valid (fully default) run.

use std::path::Path;

use serde::{Deserialize, Serialize};

use fairshift::domain::JointSpec;
use fairshift::predictor::Arch;
use fairshift::seeding::derive_seed;
use fairshift::synthgen::{random_orthogonal, SynthConfig};
use fairshift::train::{Objective, TrainConfig};
use fairshift::KernelConfig;

use crate::errors::{CliError, CliResult};

/// Everything a run can be told. Sections map to subcommands: `[data]` for
/// `generate`, `[train]` for `train` (and as the base of sweep candidates),
/// `[sweep]` for the grid and its gate, `[evaluate]` for the shift-family
/// harness. The root `seed` feeds every random stream via named derivation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataSection,
    pub train: TrainSection,
    pub sweep: SweepSection,
    pub evaluate: EvaluateSection,
}

impl RunConfig {
    /// The resolved configuration as TOML, for the run manifest. Parsing
    /// this string back yields an identical `RunConfig`.
    pub fn to_toml_string(&self) -> CliResult<String> {
        toml::to_string_pretty(self)
            .map_err(|e| CliError::runtime(format!("serializing resolved config: {e}")))
    }
}

/// Synthetic-generator geometry and the joints to sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// Dimension of the label-driven signal block.
    pub d_star: usize,
    /// Dimension of the attribute-driven shortcut block.
    pub d_short: usize,
    /// Dimension of the pure-noise block.
    pub d_noise: usize,
    /// Mean shift of the signal block when y = 1; all-ones when omitted.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_star: Option<Vec<f64>>,
    /// Mean shift of the shortcut block when v = 1; all-ones when omitted.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_short: Option<Vec<f64>>,
    /// Isotropic noise scale shared by all blocks.
    pub sigma: f64,
    /// P(Y=1), held fixed across the whole shift family.
    pub p_y1: f64,
    /// Source association mu = P(V=1|Y=1) = P(V=0|Y=0) for the training
    /// table. The evaluation pool is always drawn at mu = 0.5 so every
    /// family member can be subsampled from it.
    pub mu: f64,
    /// Rows in the generated training table.
    pub n_train: usize,
    /// Rows in the generated evaluation pool.
    pub n_pool: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            d_star: 4,
            d_short: 4,
            d_noise: 8,
            delta_star: None,
            delta_short: None,
            sigma: 1.0,
            p_y1: 0.3,
            mu: 0.9,
            n_train: 4000,
            n_pool: 60_000,
        }
    }
}

impl DataSection {
    /// Build the generator. The mixing matrix is derived from the root seed,
    /// so two runs with the same seed share one world; the per-dataset
    /// example streams are derived separately by the commands.
    pub fn synth_config(&self, root_seed: u64) -> CliResult<SynthConfig> {
        let seed = derive_seed(root_seed, "generator");
        let base = SynthConfig {
            d_star: self.d_star,
            d_short: self.d_short,
            d_noise: self.d_noise,
            delta_star: self
                .delta_star
                .clone()
                .unwrap_or_else(|| vec![1.0; self.d_star]),
            delta_short: self
                .delta_short
                .clone()
                .unwrap_or_else(|| vec![1.0; self.d_short]),
            sigma: self.sigma,
            mix: None,
            seed,
        };
        let cfg = SynthConfig {
            mix: Some(random_orthogonal(
                base.total_dim(),
                derive_seed(seed, "mix"),
            )),
            ..base
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The joint the training table is drawn from.
    pub fn source_spec(&self) -> CliResult<JointSpec> {
        Ok(JointSpec::new(self.p_y1, self.mu)?)
    }

    /// The attribute-balanced joint the evaluation pool is drawn from.
    pub fn neutral_spec(&self) -> CliResult<JointSpec> {
        Ok(JointSpec::new(self.p_y1, 0.5)?)
    }
}

/// Optimizer and objective settings; also the base every sweep candidate
/// starts from before the grid overrides alpha/gamma (or l2 for `erm`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub objective: Objective,
    pub arch: Arch,
    /// Penalty strength; per-objective tuned default when omitted.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// RBF kernel bandwidth (the gamma in exp(-||a-b||^2 / gamma)).
    pub gamma: f64,
    pub l2: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Constant SGD step; per-architecture default when omitted.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    /// Representation width; min(input_dim, 8) when omitted.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repr_dim: Option<usize>,
    /// Share of the training table used for fitting; the rest is the
    /// held-out validation part (sweep gate, stability splits).
    pub train_fraction: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            objective: Objective::Erm,
            arch: Arch::Linear,
            alpha: None,
            gamma: 10.0,
            l2: 0.0,
            batch_size: 64,
            epochs: 50,
            learning_rate: None,
            repr_dim: None,
            train_fraction: 0.75,
        }
    }
}

impl TrainSection {
    /// Materialize a full training configuration for `objective`. Optional
    /// fields fall back to the library's tuned defaults; the fit seed is
    /// derived from the root seed.
    pub fn train_config(
        &self,
        objective: Objective,
        input_dim: usize,
        root_seed: u64,
    ) -> CliResult<TrainConfig> {
        let mut cfg = TrainConfig::defaults(objective, self.arch, input_dim);
        cfg.kernel = KernelConfig::new(self.gamma)?;
        cfg.l2 = self.l2;
        cfg.batch_size = self.batch_size;
        cfg.epochs = self.epochs;
        if let Some(a) = self.alpha {
            cfg.alpha = a;
        }
        if let Some(lr) = self.learning_rate {
            cfg.learning_rate = lr;
        }
        if let Some(r) = self.repr_dim {
            cfg.repr_dim = r;
        }
        cfg.seed = derive_seed(root_seed, "fit");
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate_fraction(&self) -> CliResult<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(CliError::validation(format!(
                "train.train_fraction must lie strictly between 0 and 1, got {}",
                self.train_fraction
            )));
        }
        Ok(())
    }
}

/// Grid definition for `sweep`. MMD-penalized objectives take the
/// alphas x gammas product; `erm` takes one row per l2 value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub objectives: Vec<Objective>,
    pub alphas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub l2s: Vec<f64>,
    /// Validation folds for the invariance gate.
    pub folds: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            objectives: Objective::ALL.to_vec(),
            alphas: vec![1e3, 1e5, 1e7],
            gammas: vec![10.0, 100.0, 1000.0],
            l2s: vec![0.0, 1e-4, 1e-3],
            folds: 5,
        }
    }
}

impl SweepSection {
    /// Expand the grid in declaration order: objectives outermost, then
    /// alphas x gammas (or l2 values for `erm`).
    pub fn grid(
        &self,
        base: &TrainSection,
        input_dim: usize,
        root_seed: u64,
    ) -> CliResult<Vec<TrainConfig>> {
        let mut grid = Vec::new();
        for &objective in &self.objectives {
            match objective {
                Objective::Erm => {
                    for &l2 in &self.l2s {
                        let mut cfg = base.train_config(objective, input_dim, root_seed)?;
                        cfg.alpha = 0.0;
                        cfg.l2 = l2;
                        cfg.validate()?;
                        grid.push(cfg);
                    }
                }
                _ => {
                    for &alpha in &self.alphas {
                        for &gamma in &self.gammas {
                            let mut cfg = base.train_config(objective, input_dim, root_seed)?;
                            cfg.alpha = alpha;
                            cfg.kernel = KernelConfig::new(gamma)?;
                            cfg.validate()?;
                            grid.push(cfg);
                        }
                    }
                }
            }
        }
        if grid.is_empty() {
            return Err(CliError::validation(
                "sweep grid is empty: sweep.objectives must be nonempty, with \
                 sweep.alphas and sweep.gammas for MMD objectives (sweep.l2s for erm)",
            ));
        }
        Ok(grid)
    }
}

/// Shift-family evaluation settings shared by `evaluate` and `stability`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateSection {
    /// Family members, as mu = P(V=1|Y=1) = P(V=0|Y=0) values.
    pub mus: Vec<f64>,
    /// Test rows drawn per family member (and for the source test set).
    pub n_per: usize,
    /// Bootstrap replicates per reported metric; 0 disables the bootstrap.
    pub bootstrap: usize,
    /// Model name in the report; defaults to the checkpoint's objective
    /// (or "oracle" in oracle mode).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self {
            mus: vec![0.1, 0.3, 0.5, 0.7, 0.9, 0.95],
            n_per: 3000,
            bootstrap: 1000,
            name: None,
        }
    }
}

impl EvaluateSection {
    pub fn family(&self, p_y1: f64) -> CliResult<Vec<JointSpec>> {
        if self.mus.is_empty() {
            return Err(CliError::validation("evaluate.mus must be nonempty"));
        }
        self.mus
            .iter()
            .map(|&mu| JointSpec::new(p_y1, mu).map_err(CliError::from))
            .collect()
    }
}

/// Load the config file (or start from defaults), apply `--set` overrides,
/// then apply the `--seed` flag. The result is the fully resolved
/// configuration recorded in the manifest.
pub fn load_config(
    path: Option<&Path>,
    sets: &[String],
    seed_flag: Option<u64>,
) -> CliResult<RunConfig> {
    let mut value: toml::Value = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| {
                CliError::validation(format!("cannot read config {}: {e}", p.display()))
            })?;
            text.parse().map_err(|e| {
                CliError::validation(format!("config {}: {e}", p.display()))
            })?
        }
        None => toml::Value::Table(toml::map::Map::new()),
    };
    for spec in sets {
        apply_set(&mut value, spec)?;
    }
    let mut cfg: RunConfig = value
        .try_into()
        .map_err(|e| CliError::validation(format!("config: {e}")))?;
    if let Some(seed) = seed_flag {
        cfg.seed = seed;
    }
    Ok(cfg)
}

/// Apply one `key.path=value` override onto the raw TOML tree, creating
/// intermediate tables as needed. Values use TOML syntax (numbers, booleans,
/// arrays, quoted strings); a bare word is taken as a string.
fn apply_set(root: &mut toml::Value, spec: &str) -> CliResult<()> {
    let (path, raw) = spec.split_once('=').ok_or_else(|| {
        CliError::validation(format!("--set expects key.path=value, got `{spec}`"))
    })?;
    let path = path.trim();
    let segments: Vec<&str> = path.split('.').collect();
    if path.is_empty() || segments.iter().any(|s| s.is_empty()) {
        return Err(CliError::validation(format!(
            "--set key `{path}` has an empty segment"
        )));
    }
    let parsed = parse_override_value(raw.trim());
    let mut cur = root;
    for seg in &segments[..segments.len() - 1] {
        let table = match cur {
            toml::Value::Table(t) => t,
            _ => {
                return Err(CliError::validation(format!(
                    "--set {path}: `{seg}` is not a table"
                )))
            }
        };
        cur = table
            .entry((*seg).to_string())
            .or_insert_with(|| toml::Value::Table(toml::map::Map::new()));
    }
    match cur {
        toml::Value::Table(t) => {
            t.insert(segments[segments.len() - 1].to_string(), parsed);
            Ok(())
        }
        _ => Err(CliError::validation(format!(
            "--set {path}: parent of `{}` is not a table",
            segments[segments.len() - 1]
        ))),
    }
}

fn parse_override_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Value>() {
        Ok(toml::Value::Table(mut t)) if t.contains_key("v") => t.remove("v").unwrap(),
        _ => toml::Value::String(raw.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_deserialize_from_empty_and_round_trip() {
        let cfg = load_config(None, &[], None).unwrap();
        assert_eq!(cfg, RunConfig::default());
        let text = cfg.to_toml_string().unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn overrides_reach_nested_fields_with_toml_typing() {
        let sets = [
            "seed=9".to_string(),
            "train.alpha=2.5".to_string(),
            "train.objective=wm_mmd".to_string(),
            "evaluate.mus=[0.5, 0.9]".to_string(),
            "data.n_train=12".to_string(),
        ];
        let cfg = load_config(None, &sets, None).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.train.alpha, Some(2.5));
        assert_eq!(cfg.train.objective, Objective::WmMmd);
        assert_eq!(cfg.evaluate.mus, vec![0.5, 0.9]);
        assert_eq!(cfg.data.n_train, 12);
    }

    #[test]
    fn seed_flag_wins_over_config_and_override() {
        let cfg = load_config(None, &["seed=3".to_string()], Some(11)).unwrap();
        assert_eq!(cfg.seed, 11);
    }

    #[test]
    fn unknown_field_is_a_validation_error() {
        let err = load_config(None, &["train.alhpa=5".to_string()], None).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        let msg = err.to_string();
        assert!(msg.contains("alhpa"), "diagnostic names the field: {msg}");
    }

    #[test]
    fn malformed_set_is_a_validation_error() {
        for bad in ["train.alpha", "=5", "a..b=1"] {
            let err = load_config(None, &[bad.to_string()], None).unwrap_err();
            assert_eq!(err.exit_code(), 1, "for {bad}");
        }
    }

    #[test]
    fn bare_words_become_strings() {
        assert_eq!(
            parse_override_value("m_mmd"),
            toml::Value::String("m_mmd".into())
        );
        assert_eq!(parse_override_value("10"), toml::Value::Integer(10));
        assert_eq!(parse_override_value("true"), toml::Value::Boolean(true));
    }

    #[test]
    fn grid_shape_matches_configured_lists() {
        let cfg = RunConfig::default();
        let grid = cfg.sweep.grid(&cfg.train, 16, 0).unwrap();
        // erm: one per l2; each MMD objective: alphas x gammas.
        assert_eq!(grid.len(), 3 + 3 * 9);
        let erm_rows = grid.iter().filter(|c| c.objective == Objective::Erm).count();
        assert_eq!(erm_rows, 3);

        let one = SweepSection {
            objectives: vec![Objective::MMmd],
            ..SweepSection::default()
        };
        assert_eq!(one.grid(&cfg.train, 16, 0).unwrap().len(), 9);

        let empty = SweepSection {
            objectives: vec![],
            ..SweepSection::default()
        };
        assert_eq!(
            empty.grid(&cfg.train, 16, 0).unwrap_err().exit_code(),
            1
        );
    }

    #[test]
    fn integer_literals_fill_float_fields() {
        let cfg = load_config(None, &["train.gamma=100".to_string()], None).unwrap();
        assert_eq!(cfg.train.gamma, 100.0);
    }
}
