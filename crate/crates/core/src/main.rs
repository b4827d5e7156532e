use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sse::cli::{self, RunConfig};
use sse::Error;

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Parser)]
#[command(name = "sse", version, about = "Causal streaming speech enhancement")]
struct Args {
    /// JSON run configuration; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate corruptions for every file in a manifest.
    Corrupt {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train a score network and write a checkpoint.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides train.seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Metrics log; defaults to `<out>.metrics.txt`.
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Enhance one WAV file.
    Enhance {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// SI-SDR and log-spectral distance of matching file pairs.
    Eval {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        deg: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Latency, causality, STFT and diffusion-kernel checks.
    Selfcheck,
}

fn run(args: Args) -> Result<(), (i32, String)> {
    let fail = |e: Error| (cli::exit_code(&e), e.to_string());
    let config = RunConfig::load(args.config.as_deref()).map_err(fail)?;
    config.log_effective();
    match args.command {
        Command::Corrupt { input, out, seed } => {
            let outcome = cli::cmd_corrupt(&input, &out, &config, seed).map_err(fail)?;
            println!("wrote {} files", outcome.written.len());
            if let Some(code) = outcome.failed.iter().map(|(_, e)| cli::exit_code(e)).max() {
                return Err((code, format!("{} files failed", outcome.failed.len())));
            }
        }
        Command::Train {
            manifest,
            out,
            seed,
            metrics,
        } => {
            let metrics = metrics.unwrap_or_else(|| out.with_extension("metrics.txt"));
            let report = cli::cmd_train(&manifest, &config, &out, seed, Some(&metrics)).map_err(fail)?;
            if let Some(l) = report.losses.last() {
                println!("final loss {l:.6}");
            }
        }
        Command::Enhance {
            input,
            out,
            checkpoint,
            seed,
        } => {
            let latency = cli::cmd_enhance(&input, &out, &checkpoint, &config, seed).map_err(fail)?;
            println!("algorithmic latency {latency} ms");
        }
        Command::Eval {
            reference,
            deg,
            report,
        } => {
            let rows = cli::cmd_eval(&reference, &deg, &report, &config).map_err(fail)?;
            print!("{}", cli::format_report(&rows, &[]));
        }
        Command::Selfcheck => {
            let results = cli::cmd_selfcheck(&config);
            for r in &results {
                let status = if r.passed { "pass" } else { "FAIL" };
                println!("check {} {status}: {}", r.name, r.detail);
            }
            let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
            if !failed.is_empty() {
                return Err((2, format!("failed checks: {}", failed.join(", "))));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code as u8)
        }
    }
}
