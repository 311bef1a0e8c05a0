//! `htad` — train, evaluate, and inspect target-attentive diagnosis models.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use htad::cli::{
    cmd_eval, cmd_export_attention, cmd_generate, cmd_train, exit_code, EvalArgs, ExportArgs,
    GenerateArgs, TrainArgs,
};
use htad::train::TaskKind;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TaskArg {
    /// Multi-label diagnosis-group classification (AUC-ROC metrics).
    Phenotype,
    /// Exact-code ranking over candidate lists (MAP@K metrics).
    Rank,
}

impl From<TaskArg> for TaskKind {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Phenotype => TaskKind::Phenotype,
            TaskArg::Rank => TaskKind::Rank,
        }
    }
}

#[derive(Parser)]
#[command(name = "htad", version, about = "Target-attentive diagnosis prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write a checkpoint plus a training log.
    Train {
        /// JSON run configuration (model + training sections).
        #[arg(long)]
        config: PathBuf,
        /// Clinical records, JSON Lines.
        #[arg(long)]
        records: PathBuf,
        /// (patient, diagnosis) targets, JSON Lines.
        #[arg(long)]
        targets: PathBuf,
        /// Diagnosis-to-group mapping, JSON Lines.
        #[arg(long)]
        grouping: PathBuf,
        /// Directory of per-patient series CSV files.
        #[arg(long)]
        series: Option<PathBuf>,
        /// Output checkpoint path; the log goes to <out>.log.csv.
        #[arg(long)]
        out: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config task.
        #[arg(long, value_enum)]
        task: Option<TaskArg>,
    },
    /// Score a dataset with a trained checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        targets: PathBuf,
        /// Optional grouping file; must match the checkpoint vocabulary.
        #[arg(long)]
        grouping: Option<PathBuf>,
        #[arg(long)]
        series: Option<PathBuf>,
        #[arg(long, value_enum)]
        task: TaskArg,
        /// Write the JSON metrics report here (always printed to stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed for ranking candidate sampling.
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Export per-prediction attention traces and an aggregate report.
    ExportAttention {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        targets: PathBuf,
        #[arg(long)]
        series: Option<PathBuf>,
        /// Traces go here (JSON Lines); the report to <out>.report.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic train/test dataset with planted signals.
    Generate {
        /// JSON generator configuration.
        #[arg(long)]
        config: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn run(cli: Cli) -> htad::Result<()> {
    match cli.command {
        Command::Train {
            config,
            records,
            targets,
            grouping,
            series,
            out,
            seed,
            task,
        } => cmd_train(&TrainArgs {
            config,
            records,
            targets,
            grouping,
            series,
            out,
            seed,
            task: task.map(Into::into),
        }),
        Command::Eval {
            checkpoint,
            records,
            targets,
            grouping,
            series,
            task,
            out,
            seed,
        } => {
            let report = cmd_eval(&EvalArgs {
                checkpoint,
                records,
                targets,
                grouping,
                series,
                task: task.into(),
                out,
                seed,
            })?;
            println!("{}", report.to_json());
            Ok(())
        }
        Command::ExportAttention {
            checkpoint,
            records,
            targets,
            series,
            out,
        } => cmd_export_attention(&ExportArgs {
            checkpoint,
            records,
            targets,
            series,
            out,
        }),
        Command::Generate { config, out, seed } => {
            cmd_generate(&GenerateArgs { config, out, seed })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err) as u8)
        }
    }
}
