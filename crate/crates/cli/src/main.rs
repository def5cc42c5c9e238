//! `pixelcert`: train the toy model and run certification experiments.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "pixelcert", version, about = "Pixel-level certification of attribution maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run configuration; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the master seed (the training seed for train-toy).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, env = "PIXELCERT_JOBS")]
    jobs: Option<usize>,
    /// Overrides model_path.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the toy classifier and write the model file.
    TrainToy {
        #[command(flatten)]
        common: Common,
        /// Model file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Certify attribution maps of dataset images.
    Certify {
        #[command(flatten)]
        common: Common,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Certified grid pointing game on class-distinct image grids.
    Gridpg {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Deletion curves over certified-important pixels.
    Faithfulness {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a certify report, or a JSON list of certified maps, to PNG.
    Render {
        /// Certify report or list of certified maps.
        #[arg(long)]
        input: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Pixel enlargement; defaults to the report's setting.
        #[arg(long)]
        scale: Option<usize>,
        #[arg(long, env = "PIXELCERT_JOBS")]
        jobs: Option<usize>,
    },
}

/// Failure class, mapped to the process exit code.
pub enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

fn setup_jobs(jobs: Option<usize>) -> Result<(), Failure> {
    let Some(jobs) = jobs else { return Ok(()) };
    if jobs == 0 {
        return Err(Failure::Usage(anyhow::anyhow!("--jobs must be >= 1")));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build_global()
        .map_err(|e| Failure::Runtime(e.into()))
}

fn prepare(common: &Common) -> Result<config::RunConfig, Failure> {
    setup_jobs(common.jobs)?;
    let mut cfg = config::load(common.config.as_deref()).map_err(Failure::Usage)?;
    if let Some(seed) = common.seed {
        cfg.smoothing.master_seed = seed;
        cfg.train.seed = seed;
    }
    if let Some(model) = &common.model {
        cfg.model_path = Some(model.clone());
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::TrainToy { common, out } => {
            let cfg = prepare(&common)?;
            commands::train_toy(&cfg, &out)
        }
        Command::Certify { common, out } => {
            let mut cfg = prepare(&common)?;
            commands::resolve_out(&mut cfg, out);
            commands::certify(&cfg)
        }
        Command::Gridpg { common, out } => {
            let mut cfg = prepare(&common)?;
            commands::resolve_out(&mut cfg, out);
            commands::gridpg_cmd(&cfg)
        }
        Command::Faithfulness { common, out } => {
            let mut cfg = prepare(&common)?;
            commands::resolve_out(&mut cfg, out);
            commands::faithfulness_cmd(&cfg)
        }
        Command::Render { input, out, scale, jobs } => {
            setup_jobs(jobs)?;
            if scale == Some(0) {
                return Err(Failure::Usage(anyhow::anyhow!("--scale must be >= 1")));
            }
            commands::render_cmd(&input, &out, scale)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
