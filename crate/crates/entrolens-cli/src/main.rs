//! `entrolens`: train the toy policies, ingest token-entropy traces, and
//! run the clustering / phase / hull diagnosis pipeline.
//!
//! Exit codes: 0 on success, 1 on runtime errors (bad inputs, failed
//! stages), 2 on usage errors (unknown flags or invalid flag values).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod artifacts;
mod commands;
mod config;

use config::{
    ClusterFlags, ClusterSettings, FileConfig, HullFlags, HullSettings, IngestFlags,
    IngestSettings, ProjectFlags, ProjectSettings, TrainFlags, TrainSettings,
};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot read {what}")]
    Input {
        what: String,
        source: std::io::Error,
    },

    #[error("cannot write {what}")]
    Output {
        what: String,
        source: std::io::Error,
    },

    #[error("config file {path}: {message}")]
    Config { path: String, message: String },

    #[error("cannot parse {what}: {message}")]
    Parse { what: String, message: String },

    #[error("{message}")]
    Setting { message: String },

    #[error("cannot encode artifact")]
    Encode(#[source] serde_json::Error),

    #[error("{stage} stage failed")]
    Stage {
        stage: &'static str,
        source: Box<CliError>,
    },

    #[error(transparent)]
    Lib(#[from] entrolens::Error),
}

#[derive(Parser)]
#[command(
    name = "entrolens",
    version,
    about = "Intrinsic-reward toy training and entropy-trajectory diagnostics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the toy policy and emit its trace, accuracy, and summary.
    #[command(name = "toy-train")]
    ToyTrain(ToyTrainArgs),
    /// Build normalized entropy trajectories from a trace.
    Ingest(IngestArgs),
    /// Fit Soft-DTW k-means over a trajectories artifact.
    Cluster(ClusterArgs),
    /// Project a trace into the 3-D phase space of a fitted model.
    Project(ProjectArgs),
    /// Compute the convex hull of a phase trajectory and diagnose it.
    Hull(HullArgs),
    /// Run ingest, cluster, project, and hull in one go with a report.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct ConfigArg {
    /// TOML settings file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ToyTrainArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[command(flatten)]
    train: TrainFlags,
    /// Directory the artifacts are written into.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct IngestArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Trace records (JSONL).
    #[arg(long)]
    records: PathBuf,
    /// Accuracy sidecar (JSONL); required by the accuracy-based modes.
    #[arg(long)]
    accuracy: Option<PathBuf>,
    #[command(flatten)]
    ingest: IngestFlags,
    /// Output artifact path.
    #[arg(long, default_value = "trajectories.json")]
    out: PathBuf,
}

#[derive(Args)]
struct ClusterArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Trajectories artifact from `ingest`.
    #[arg(long)]
    trajectories: PathBuf,
    #[command(flatten)]
    cluster: ClusterFlags,
    /// Output artifact path.
    #[arg(long, default_value = "model.json")]
    out: PathBuf,
}

#[derive(Args)]
struct ProjectArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Trace records (JSONL), the same stream the model was built from.
    #[arg(long)]
    records: PathBuf,
    /// Model artifact from `cluster`.
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    project: ProjectFlags,
    /// Output artifact path; a CSV twin is written next to it.
    #[arg(long, default_value = "phase.json")]
    out: PathBuf,
}

#[derive(Args)]
struct HullArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Phase artifact from `project`.
    #[arg(long)]
    phase: PathBuf,
    #[command(flatten)]
    hull: HullFlags,
    /// Output artifact path; a CSV twin is written next to it.
    #[arg(long, default_value = "hull_report.json")]
    out: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Trace records (JSONL).
    #[arg(long)]
    records: PathBuf,
    /// Accuracy sidecar (JSONL); required by the accuracy-based modes.
    #[arg(long)]
    accuracy: Option<PathBuf>,
    /// Reward kind recorded in the report (ent, avgent, lp, ch2, cp).
    #[arg(long, value_parser = config::parse_reward)]
    reward: Option<entrolens::rewards::RewardKind>,
    /// Mark the run as the supervised exact-match baseline in the report.
    #[arg(long)]
    supervised: bool,
    #[command(flatten)]
    ingest: IngestFlags,
    #[command(flatten)]
    cluster: ClusterFlags,
    #[command(flatten)]
    project: ProjectFlags,
    #[command(flatten)]
    hull: HullFlags,
    /// Directory the artifacts are written into.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::ToyTrain(args) => {
            let file = FileConfig::load(args.config.config.as_deref())?;
            let settings = TrainSettings::resolve(&file, &args.train);
            commands::toy_train(&settings, &args.out_dir)
        }
        Command::Ingest(args) => {
            let file = FileConfig::load(args.config.config.as_deref())?;
            let settings = IngestSettings::resolve(&file, &args.ingest)?;
            commands::ingest(
                &args.records,
                args.accuracy.as_deref(),
                &settings,
                &args.out,
            )
        }
        Command::Cluster(args) => {
            let file = FileConfig::load(args.config.config.as_deref())?;
            let settings = ClusterSettings::resolve(&file, &args.cluster);
            commands::cluster(&args.trajectories, &settings, &args.out)
        }
        Command::Project(args) => {
            let file = FileConfig::load(args.config.config.as_deref())?;
            let settings = ProjectSettings::resolve(&file, &args.project);
            commands::project(&args.records, &args.model, &settings, &args.out)
        }
        Command::Hull(args) => {
            let file = FileConfig::load(args.config.config.as_deref())?;
            let settings = HullSettings::resolve(&file, &args.hull);
            commands::hull(&args.phase, &settings, &args.out)
        }
        Command::Pipeline(args) => {
            let file = FileConfig::load(args.config.config.as_deref())?;
            // The pipeline never trains; the train settings only describe
            // the run in the report, so just the two descriptive flags are
            // exposed here (the rest would shadow the cluster stage's
            // `--seed` anyway).
            let train_flags = TrainFlags {
                reward: args.reward,
                supervised: args.supervised,
                ..TrainFlags::default()
            };
            let settings = commands::PipelineSettings {
                train: TrainSettings::resolve(&file, &train_flags),
                ingest: IngestSettings::resolve(&file, &args.ingest)?,
                cluster: ClusterSettings::resolve(&file, &args.cluster),
                project: ProjectSettings::resolve(&file, &args.project),
                hull: HullSettings::resolve(&file, &args.hull),
            };
            commands::pipeline(
                &args.records,
                args.accuracy.as_deref(),
                &settings,
                &args.out_dir,
            )
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {error}");
            let mut source = std::error::Error::source(&error);
            while let Some(cause) = source {
                eprintln!("  caused by: {cause}");
                source = cause.source();
            }
            ExitCode::FAILURE
        }
    }
}
