//! The `debias` command line: generate biased multi-source datasets,
//! estimate normalizers and debiasing weights, evaluate weighted training,
//! and run the two-point study.
//!
//! Every command writes its outputs plus `manifest.json` (deterministic,
//! replayable) and `run_manifest.json` (wall time) into `--out`.

mod commands;
pub mod error;
pub mod manifest;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

pub use commands::BiasMode;
use commands::{apply_seed, input, read_config, run, study_config, CommandKind, Invocation};
pub use error::CliError;
use manifest::Format;

#[derive(Parser)]
#[command(name = "debias", version, about = "Multi-source debiasing pipeline")]
pub struct Cli {
    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the `seed` key of the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Format of tabular outputs.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a biased dataset from a JSON scenario config.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Estimate biasing functions, solve for the normalizers, write weights.
    Solve {
        /// A `generate` output directory or a dataset file.
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value_t = BiasMode::GroundTruth)]
        bias: BiasMode,
        /// Optional JSON with `solver`, `smoothing`, `margin`.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Naive versus debiased training sweep, and/or the debiased label
    /// distribution of a dataset under given weights.
    Evaluate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// `weights.csv` written by `solve`.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Gini index of the weights over the two-point R grid.
    StudyTwoPoint {
        /// Optional JSON overriding the standard grid settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Re-run the command recorded in a manifest.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn invocation(command: Command) -> Result<(Invocation, PathBuf), CliError> {
    let base = |kind, config, c: &Common| Invocation {
        command: kind,
        config,
        seed: c.seed,
        format: c.format,
        params: BTreeMap::new(),
        inputs: BTreeMap::new(),
    };
    Ok(match command {
        Command::Generate { config, common } => {
            let mut cfg = read_config(&config)?;
            apply_seed(&mut cfg, common.seed)?;
            (base(CommandKind::Generate, cfg, &common), common.out)
        }
        Command::Solve {
            dataset,
            bias,
            config,
            common,
        } => {
            let mut cfg = config.map_or(Ok(Value::Object(Default::default())), |p| read_config(&p))?;
            apply_seed(&mut cfg, common.seed)?;
            let mut inv = base(CommandKind::Solve, cfg, &common);
            let bias = serde_json::to_value(bias).expect("serializable");
            inv.params.insert("bias".into(), bias.as_str().unwrap_or_default().to_string());
            inv.inputs.insert("dataset".into(), input(&dataset)?);
            (inv, common.out)
        }
        Command::Evaluate {
            config,
            dataset,
            weights,
            common,
        } => {
            let mut cfg = config.map_or(Ok(Value::Null), |p| read_config(&p))?;
            if !cfg.is_null() {
                apply_seed(&mut cfg, common.seed)?;
            }
            let mut inv = base(CommandKind::Evaluate, cfg, &common);
            if let Some(d) = dataset {
                inv.inputs.insert("dataset".into(), input(&d)?);
            }
            if let Some(w) = weights {
                inv.inputs.insert("weights".into(), input(&w)?);
            }
            (inv, common.out)
        }
        Command::StudyTwoPoint { config, common } => {
            let user = config.map(|p| read_config(&p)).transpose()?;
            let cfg = study_config(user, common.seed)?;
            (base(CommandKind::StudyTwoPoint, cfg, &common), common.out)
        }
        Command::Replay { manifest, out } => (Invocation::from_manifest(&manifest::read(&manifest)?)?, out),
    })
}

/// Runs a parsed command line. `--threads` scopes a dedicated pool, so
/// several runs can share one process.
pub fn execute(cli: Cli) -> Result<(), CliError> {
    let (inv, out) = invocation(cli.command)?;
    match cli.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::config(format!("--threads: {e}")))?
            .install(|| run(&inv, &out)),
        None => run(&inv, &out),
    }
}

/// Parses `args` (program name first) and runs them. Usage errors map to
/// the config exit code.
pub fn run_args<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::config(e.to_string()))?;
    execute(cli)
}
