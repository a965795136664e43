use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use motrack_cli::commands::{
    VisualizeMode, cmd_bench, cmd_eval, cmd_simcheck, cmd_synth, cmd_track, cmd_train,
    cmd_visualize,
};
use motrack_cli::{CliError, RunConfig};

/// Motion-attention heatmap tracking for fast, small objects.
#[derive(Parser)]
#[command(name = "motrack", version, about)]
struct Cli {
    /// Key = value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the configured random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic clip (frames + labels.csv) into --out.
    Synth,
    /// Train a model on a frame directory with labels.csv.
    Train {
        /// Directory of numbered PNG frames plus labels.csv.
        #[arg(long)]
        data: PathBuf,
        /// Output model file.
        #[arg(long)]
        model: PathBuf,
        /// Continue from pretrained weights (fine-tuning).
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Run inference over a clip and write predictions.csv.
    Track {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        frames: PathBuf,
        /// Output CSV path.
        #[arg(long = "out-csv")]
        out_csv: PathBuf,
        /// Decode threshold (overrides the configured value).
        #[arg(long)]
        threshold: Option<f64>,
        /// Resize frames to the model resolution when they differ.
        #[arg(long)]
        resize: bool,
    },
    /// Score predictions.csv against labels.csv.
    Eval {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Localization tolerance in pixels.
        #[arg(long, default_value_t = 4.0)]
        tol: f64,
    },
    /// Render attention/prompted/heatmap/trajectory overlays into --out.
    Visualize {
        #[arg(long)]
        frames: PathBuf,
        /// attention | prompted | heatmap | trajectory
        #[arg(long)]
        mode: String,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Measure model-only and end-to-end FPS.
    Bench {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        frames: PathBuf,
    },
    /// Per-layer cosine similarity between two model files.
    Simcheck { model_a: PathBuf, model_b: PathBuf },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let need_out = |out: &Option<PathBuf>| {
        out.clone()
            .ok_or_else(|| CliError::Usage("this command requires --out <dir>".to_string()))
    };
    match cli.command {
        Command::Synth => cmd_synth(&cfg, &need_out(&cli.out)?),
        Command::Train { data, model, init } => cmd_train(
            &cfg,
            &data,
            &model,
            init.as_deref(),
            cli.out.as_deref(),
        ),
        Command::Track {
            model,
            frames,
            out_csv,
            threshold,
            resize,
        } => cmd_track(&cfg, &model, &frames, &out_csv, threshold, resize),
        Command::Eval {
            predictions,
            labels,
            tol,
        } => cmd_eval(&predictions, &labels, tol, cli.out.as_deref()).map(|_| ()),
        Command::Visualize {
            frames,
            mode,
            model,
        } => {
            let mode: VisualizeMode = mode.parse()?;
            cmd_visualize(&cfg, &frames, mode, model.as_deref(), &need_out(&cli.out)?)
        }
        Command::Bench { model, frames } => cmd_bench(&cfg, &model, &frames).map(|_| ()),
        Command::Simcheck { model_a, model_b } => cmd_simcheck(&model_a, &model_b).map(|_| ()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("motrack: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
