//! `fairshift`: generate synthetic anti-causal data, train group-invariant
//! predictors, select hyperparameters under an invariance gate, and
//! stress-test models across label-attribute shift families.
//!
//! Exit codes: 0 success, 1 validation error (flags, config, parameters),
//! 2 runtime/data error (missing or malformed files, pools too small,
//! numerical aborts).

mod commands;
mod config;
mod errors;
mod manifest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use commands::evaluate::ModelSource;
use errors::{CliError, CliResult};
use manifest::RunManifest;

#[derive(Parser)]
#[command(
    name = "fairshift",
    version,
    about = "Train and stress-test group-invariant predictors on synthetic anti-causal data"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Common {
    /// TOML configuration; omitted fields (or the whole flag) use defaults.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Output directory (created if missing); receives the artifacts and a
    /// manifest.json sufficient to reproduce them.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,

    /// Root seed for every random stream; overrides the config's `seed`.
    #[arg(long)]
    seed: Option<u64>,

    /// Dotted-path config override, e.g. --set train.alpha=5 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample a training table and an evaluation pool from the synthetic
    /// generator, with a JSON sidecar describing the generator.
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Fit one predictor on the training table; write checkpoint + log.
    Train {
        #[command(flatten)]
        common: Common,
        /// Directory holding train.csv (a `generate` output directory).
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
    },
    /// Train a hyperparameter grid, gate on held-out invariance, and write
    /// the candidate table plus the selected checkpoint.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Directory holding train.csv (a `generate` output directory).
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
    },
    /// Score one model across the shift family; write report + plot CSV.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Directory holding pool.csv (and generator.json for --oracle).
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        /// Checkpoint to evaluate.
        #[arg(
            long,
            value_name = "FILE",
            required_unless_present = "oracle",
            conflicts_with = "oracle"
        )]
        checkpoint: Option<PathBuf>,
        /// Evaluate the generator's closed-form optimal scorer instead of a
        /// checkpoint.
        #[arg(long)]
        oracle: bool,
    },
    /// Tabulate per-split invariance statistics for trained checkpoints.
    Stability {
        #[command(flatten)]
        common: Common,
        /// Directory holding train.csv and pool.csv.
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        /// Checkpoint to include (repeatable).
        #[arg(long = "checkpoint", value_name = "FILE", required = true)]
        checkpoints: Vec<PathBuf>,
    },
    /// Merge evaluation reports into one plot-ready CSV.
    Report {
        #[command(flatten)]
        common: Common,
        /// report.json produced by `evaluate` (repeatable).
        #[arg(long = "report", value_name = "FILE", required = true)]
        reports: Vec<PathBuf>,
    },
}

impl Cmd {
    fn name(&self) -> &'static str {
        match self {
            Cmd::Generate { .. } => "generate",
            Cmd::Train { .. } => "train",
            Cmd::Sweep { .. } => "sweep",
            Cmd::Evaluate { .. } => "evaluate",
            Cmd::Stability { .. } => "stability",
            Cmd::Report { .. } => "report",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Cmd::Generate { common }
            | Cmd::Train { common, .. }
            | Cmd::Sweep { common, .. }
            | Cmd::Evaluate { common, .. }
            | Cmd::Stability { common, .. }
            | Cmd::Report { common, .. } => common,
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version print to stdout and succeed; real usage
            // errors are validation failures.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli.command) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(cmd: Cmd) -> CliResult<()> {
    let common = cmd.common();
    let cfg = config::load_config(common.config.as_deref(), &common.set, common.seed)?;
    std::fs::create_dir_all(&common.out).map_err(|e| {
        CliError::runtime(format!(
            "cannot create output directory {}: {e}",
            common.out.display()
        ))
    })?;

    let (inputs, mut outputs) = match &cmd {
        Cmd::Generate { common } => commands::generate::run(&cfg, &common.out)?,
        Cmd::Train { common, data } => commands::train::run(&cfg, data, &common.out)?,
        Cmd::Sweep { common, data } => commands::sweep::run(&cfg, data, &common.out)?,
        Cmd::Evaluate {
            common,
            data,
            checkpoint,
            oracle,
        } => {
            let source = match (checkpoint, oracle) {
                (Some(path), false) => ModelSource::Checkpoint(path.clone()),
                (None, true) => ModelSource::Oracle,
                // clap enforces exactly one; keep a guard for direct calls.
                _ => {
                    return Err(CliError::validation(
                        "pass exactly one of --checkpoint or --oracle",
                    ))
                }
            };
            commands::evaluate::run(&cfg, data, &source, &common.out)?
        }
        Cmd::Stability {
            common,
            data,
            checkpoints,
        } => commands::stability::run(&cfg, data, checkpoints, &common.out)?,
        Cmd::Report { common, reports } => commands::report::run(reports, &common.out)?,
    };

    outputs.sort();
    let manifest = RunManifest {
        command: cmd.name().to_string(),
        config_path: common.config.as_ref().map(|p| p.display().to_string()),
        inputs,
        outputs,
        seed: cfg.seed,
        overrides: common.set.clone(),
        resolved_config: cfg.to_toml_string()?,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        timestamp: chrono::Utc::now().to_rfc3339(),
    };
    manifest::write_manifest(&manifest, &common.out)
}
