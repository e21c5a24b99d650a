use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod error;

use config::RunConfig;
use error::CliResult;

/// Certified segmentation under randomized smoothing.
#[derive(Debug, Parser)]
#[command(name = "segcert", version, about)]
struct Cli {
    /// Run configuration (`[section]` headers with `key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for every seeded section (scene, smoothing, model, fwer).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Override a config key, e.g. `--set smoothing.sigma=0.5`. Repeatable.
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic scene and its ground-truth labels.
    Gen,
    /// Certify one image and write labels, p-values, metrics and a run log.
    Certify {
        #[arg(long)]
        sigma: Option<f64>,
        /// off, single_step or multi_step.
        #[arg(long)]
        denoise: Option<String>,
    },
    /// Certify over a list of noise levels (`sweep.sigmas`).
    Sweep {
        /// Comma-separated noise levels.
        #[arg(long)]
        sigmas: Option<String>,
    },
    /// Compare a predicted label map with ground truth.
    Eval {
        pred: PathBuf,
        gt: PathBuf,
        #[arg(long)]
        classes: Option<usize>,
    },
    /// Colour a label map; abstentions are black.
    Render {
        labels: PathBuf,
        /// Output PPM path (default: <out>/render.ppm).
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        classes: Option<usize>,
    },
    /// Print the diffusion timestep matched to a noise level.
    Timestep {
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        beta_start: Option<f64>,
        #[arg(long)]
        beta_end: Option<f64>,
    },
    /// Simulate the family-wise error rate on a null oracle channel.
    FwerSim {
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
    },
}

fn load_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.apply_seed(seed);
    }
    for spec in &cli.overrides {
        cfg.apply_override(spec)?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = load_config(&cli)?;
    let out = cli.out.as_path();
    match cli.command {
        Command::Gen => commands::gen(&cfg, out),
        Command::Certify { sigma, denoise } => {
            if let Some(s) = sigma {
                cfg.set("smoothing", "sigma", s);
            }
            if let Some(mode) = denoise {
                cfg.set("smoothing", "denoise", mode);
            }
            commands::certify(&cfg, out)
        }
        Command::Sweep { sigmas } => {
            if let Some(list) = sigmas {
                cfg.set("sweep", "sigmas", list);
            }
            commands::sweep(&cfg, out)
        }
        Command::Eval { pred, gt, classes } => {
            let dir = cli.out.clone();
            commands::eval(&pred, &gt, classes, Some(&dir)).map(|_| ())
        }
        Command::Render {
            labels,
            output,
            classes,
        } => {
            let output = output.unwrap_or_else(|| out.join("render.ppm"));
            commands::render(&labels, &output, classes)
        }
        Command::Timestep {
            sigma,
            steps,
            beta_start,
            beta_end,
        } => {
            if let Some(v) = steps {
                cfg.set("schedule", "steps", v);
            }
            if let Some(v) = beta_start {
                cfg.set("schedule", "beta_start", v);
            }
            if let Some(v) = beta_end {
                cfg.set("schedule", "beta_end", v);
            }
            commands::timestep(&cfg, sigma).map(|_| ())
        }
        Command::FwerSim { trials, alpha } => {
            if let Some(v) = trials {
                cfg.set("fwer", "trials", v);
            }
            if let Some(v) = alpha {
                cfg.set("fwer", "alpha", v);
            }
            commands::fwer_sim(&cfg, out).map(|_| ())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
