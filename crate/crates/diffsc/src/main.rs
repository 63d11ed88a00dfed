use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use diffsc::config::{load_config, ExperimentConfig};
use diffsc::error::AppError;
use diffsc::experiment::{run_simulate, run_sweep, train, training_log, with_threads, Setup};
use diffsc::params_io::save_params;
use diffsc::table::{emit_csv, read_csv, render_text};

#[derive(Parser, Debug)]
#[command(name = "diffsc", version, about = "Diffusion-driven semantic communication experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Per (channel, SNR) cell metrics.
    Simulate(RunArgs),
    /// Trains the codec and writes its parameters and loss log.
    Train(RunArgs),
    /// Trains and evaluates one codec per grid value.
    Sweep(RunArgs),
    /// Renders a CSV table as aligned text.
    Report {
        input: PathBuf,
    },
}

fn prepare(args: &RunArgs) -> Result<ExperimentConfig, AppError> {
    let mut cfg = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.output.dir = out.clone();
    }
    if args.threads == Some(0) {
        return Err(AppError::Config {
            path: "--threads".into(),
            reason: "must be at least 1".into(),
        });
    }
    let resolved = cfg.output.resolved_config_path();
    write(&resolved, &cfg.to_toml()?)?;
    Ok(cfg)
}

fn write(path: &Path, text: &str) -> Result<(), AppError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| AppError::io(path, e))
}

fn run(cli: Cli) -> Result<(), AppError> {
    match cli.command {
        Command::Simulate(args) => {
            let cfg = prepare(&args)?;
            let table = with_threads(args.threads, || run_simulate(&cfg))??;
            let path = cfg.output.csv_path();
            emit_csv(&table, &path)?;
            print!("{}", render_text(&table));
            println!("wrote {}", path.display());
        }
        Command::Train(args) => {
            let mut cfg = prepare(&args)?;
            cfg.codec.enabled = true;
            let setup = Setup::new(&cfg)?;
            let out = with_threads(args.threads, || train(&setup, cfg.seed))??;
            emit_csv(&training_log(&out), &cfg.output.log_path())?;
            save_params(&out.params, &cfg.output.params_path())?;
            let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.3} dB"));
            println!(
                "held-out psnr: {} -> {}",
                fmt(out.initial_eval_psnr),
                fmt(out.final_eval_psnr)
            );
            println!("wrote {}", cfg.output.log_path().display());
            println!("wrote {}", cfg.output.params_path().display());
        }
        Command::Sweep(args) => {
            let cfg = prepare(&args)?;
            let table = with_threads(args.threads, || run_sweep(&cfg))??;
            let path = cfg.output.csv_path();
            emit_csv(&table, &path)?;
            print!("{}", render_text(&table));
            println!("wrote {}", path.display());
        }
        Command::Report { input } => {
            print!("{}", render_text(&read_csv(&input)?));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("diffsc: {} error: {e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
