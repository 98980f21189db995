//! `cate`: experiment driver for contrastive treatment-effect estimation.
//!
//! The subcommands cover the full loop: generate structural-model data,
//! train plain or contrastive estimators, evaluate CATE metrics, sweep the
//! noise grids, and check the linear-model bias results numerically.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use cate_core::model::{Mode, ModelFamily};
use cate_core::{Error, Result};

#[derive(Parser)]
#[command(name = "cate", version, about = "Contrastive CATE estimation experiments")]
struct Cli {
    /// Run config document (JSON); flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Root seed, overriding the config's generator and training seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory receiving all output artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Worker threads for multi-seed work (default: all logical cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Plain,
    Contrastive,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Plain => Mode::Plain,
            ModeArg::Contrastive => Mode::Contrastive,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum FamilyArg {
    Network,
    Linear,
}

impl From<FamilyArg> for ModelFamily {
    fn from(f: FamilyArg) -> ModelFamily {
        match f {
            FamilyArg::Network => ModelFamily::Network,
            FamilyArg::Linear => ModelFamily::Linear,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Sample a dataset and write CSV, schema, JSON and manifest.
    Generate {
        /// Structural model to sample: the nonlinear-confounder synthetic
        /// benchmark or the scalar linear model.
        #[arg(long, value_parser = ["synthetic", "linear"], default_value = "synthetic")]
        generator: String,

        /// Sample count, overriding the config.
        #[arg(long)]
        n: Option<usize>,

        /// Append correlated non-causal treatment dimensions after
        /// generation (the semi-synthetic protocol).
        #[arg(long)]
        augment: bool,
    },

    /// Train a model; writes snapshot, per-epoch log and manifest.
    Train {
        /// Dataset: a .json from `generate`, or a .csv with schema.json beside it.
        #[arg(long)]
        data: PathBuf,

        #[arg(long, value_enum, default_value_t = ModeArg::Contrastive)]
        mode: ModeArg,

        /// Estimator family to train.
        #[arg(long, value_enum, default_value_t = FamilyArg::Network)]
        family: FamilyArg,

        /// Triplet-loss weight (default picked by dataset provenance).
        #[arg(long)]
        weight: Option<f64>,

        /// Triplet margin (default picked by dataset provenance).
        #[arg(long)]
        margin: Option<f64>,

        #[arg(long)]
        epochs: Option<usize>,
    },

    /// Report MAE, RMSE and PEHE for a snapshot, or train-and-aggregate
    /// over the config's eval seeds when no snapshot is given.
    Eval {
        #[arg(long)]
        data: PathBuf,

        /// Model snapshot to score; omit to train fresh models per seed.
        #[arg(long)]
        model: Option<PathBuf>,

        #[arg(long, value_enum, default_value_t = ModeArg::Contrastive)]
        mode: ModeArg,

        /// Estimator family for the train-fresh path; ignored with --model.
        #[arg(long, value_enum, default_value_t = FamilyArg::Network)]
        family: FamilyArg,
    },

    /// Sweep a noise grid for plain vs contrastive and write CSV/JSON (and
    /// optionally SVG) curves.
    Sweep {
        /// Grid to sweep: outcome noise ("y-noise") or test-time non-causal
        /// perturbation scale ("noncausal-noise").
        #[arg(long, value_parser = ["y-noise", "noncausal-noise"], default_value = "y-noise")]
        axis: String,

        /// Dataset for the noncausal-noise axis; defaults to generating one
        /// from the config.
        #[arg(long)]
        data: Option<PathBuf>,

        /// Estimator family both variants train.
        #[arg(long, value_enum, default_value_t = FamilyArg::Network)]
        family: FamilyArg,

        /// Also render SVG plots of the curves.
        #[arg(long)]
        svg: bool,
    },

    /// Analytic vs Monte-Carlo intervention gap of the biased outcome
    /// family on the scalar linear model.
    Theorem1 {
        /// Mixing weight of the non-causal route, in [0, 1].
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,

        /// Non-causal latent shift between the compared treatments.
        #[arg(long, default_value_t = 1.0)]
        delta_tnc: f64,

        #[arg(long, default_value_t = 100_000)]
        draws: usize,
    },

    /// Linear-probe R² of a snapshot's representation against the causal
    /// and non-causal latent blocks, plus its perturbation invariance.
    Probe {
        #[arg(long)]
        model: PathBuf,

        #[arg(long)]
        data: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    let cfg = config::load(cli.config.as_deref(), cli.seed)?;
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::Config(format!("--jobs {jobs}: {e}")))?;
    }
    std::fs::create_dir_all(&cli.out)?;
    match &cli.command {
        Command::Generate { generator, n, augment } => {
            commands::generate(&cli.out, &cfg, generator, *n, *augment)
        }
        Command::Train { data, mode, family, weight, margin, epochs } => {
            let flags = config::TrainFlags { epochs: *epochs, weight: *weight, margin: *margin };
            commands::train(&cli.out, &cfg, data, (*family).into(), (*mode).into(), &flags)
        }
        Command::Eval { data, model, mode, family } => {
            commands::eval(&cli.out, &cfg, data, model.as_deref(), (*family).into(), (*mode).into())
        }
        Command::Sweep { axis, data, family, svg } => {
            commands::sweep(&cli.out, &cfg, axis, data.as_deref(), (*family).into(), *svg)
        }
        Command::Theorem1 { lambda, delta_tnc, draws } => {
            commands::theorem1(&cli.out, &cfg, *lambda, *delta_tnc, *draws)
        }
        Command::Probe { model, data } => commands::probe(&cli.out, &cfg, model, data),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
