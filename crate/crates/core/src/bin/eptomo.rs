use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use eptomo::cli::{self, Command};
use eptomo::ErrorClass;

/// Electron-photon tomography toolkit: simulate coincidence experiments,
/// process event streams, reconstruct joint states and certify entanglement.
#[derive(Parser)]
#[command(name = "eptomo", version, about)]
struct Args {
    #[command(subcommand)]
    command: Cmd,

    /// Run configuration file (TOML).
    #[arg(long, global = true, default_value = "eptomo.toml")]
    config: PathBuf,

    /// Overrides the seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory for artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker thread count (0 = automatic).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Coincidence histogram bin width in ps (pipeline).
    #[arg(long, global = true)]
    bin_width_ps: Option<i64>,

    /// Coincidence histogram scan range in ps (pipeline, ±range).
    #[arg(long, global = true)]
    range_ps: Option<i64>,

    /// Coincidence window override `lo:hi` in ps, once per detector
    /// (pipeline).
    #[arg(long, global = true, value_parser = parse_window, num_args = 0..=2)]
    window: Vec<(i64, i64)>,
}

fn parse_window(s: &str) -> Result<(i64, i64), String> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| "window must be lo:hi".to_string())?;
    Ok((
        lo.trim().parse().map_err(|_| "bad window lower edge".to_string())?,
        hi.trim().parse().map_err(|_| "bad window upper edge".to_string())?,
    ))
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate synthetic count tables and event streams from a ground truth.
    Simulate,
    /// Process event streams into coincidence histograms and fringe data.
    Pipeline,
    /// Reconstruct the per-side photon states from scan counts.
    ScanMle,
    /// Sample the posterior of the joint density matrix.
    Reconstruct,
    /// Entanglement measures and coherence correction from posterior samples.
    Analyze,
    /// Convergence diagnostics: Gelman-Rubin evolution, autocorrelation.
    Diagnose,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(args) => args,
        Err(e) => {
            // Usage errors exit 1; help/version print normally.
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let command = match args.command {
        Cmd::Simulate => Command::Simulate,
        Cmd::Pipeline => Command::Pipeline,
        Cmd::ScanMle => Command::ScanMle,
        Cmd::Reconstruct => Command::Reconstruct,
        Cmd::Analyze => Command::Analyze,
        Cmd::Diagnose => Command::Diagnose,
    };
    let overrides = cli::Overrides {
        seed: args.seed,
        out_dir: args.out,
        threads: args.threads,
        bin_width_ps: args.bin_width_ps,
        range_ps: args.range_ps,
        window: args.window,
    };
    match cli::run_with(command, &args.config, overrides) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            let class = match e.class() {
                ErrorClass::Data => "data",
                ErrorClass::Numerical => "numerical",
            };
            let record = serde_json::json!({
                "error": class,
                "command": command.name(),
                "message": e.to_string(),
            });
            eprintln!("{record}");
            ExitCode::from(match e.class() {
                ErrorClass::Data => 2,
                ErrorClass::Numerical => 3,
            })
        }
    }
}
