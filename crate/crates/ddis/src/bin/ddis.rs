//! Command-line front end. Exit codes: 0 success, 1 invalid input or
//! configuration, 2 verification failure, 3 I/O or file-format error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ddis::config::ExperimentConfig;
use ddis::runner::{
    cmd_bench, cmd_fit_surrogate, cmd_forward, cmd_invert, cmd_prior_sample, cmd_spectrum,
    cmd_verify, VerifySuite,
};
use ddis::{DdisError, Result};

#[derive(Parser)]
#[command(name = "ddis", version, about = "Diffusion-prior inverse solver for PDE coefficient recovery")]
struct Cli {
    /// Experiment configuration JSON; defaults apply when omitted
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the configured base seed
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory for artifacts
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw coefficient fields from the random-field prior
    PriorSample,
    /// Apply the exact forward solver to a coefficient field
    Forward {
        /// Input coefficient field (DDF1)
        input: PathBuf,
        /// Output solution field (DDF1)
        output: PathBuf,
    },
    /// Fit the spectral surrogate from generated paired data
    FitSurrogate,
    /// Run the full inversion protocol and score reconstructions
    Invert,
    /// Run analytic verification suites at their reference settings
    Verify {
        /// collapse, attenuation, invariance, adjoint, or all
        #[arg(default_value = "all")]
        suite: String,
    },
    /// Sweep samplers against paired-data fractions
    Bench {
        /// Sweep specification JSON (base config, fractions, samplers)
        grid: PathBuf,
    },
    /// Compute the radial power spectrum of a field
    Spectrum {
        /// Input field (DDF1)
        input: PathBuf,
        /// Output CSV
        output: PathBuf,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            ExperimentConfig::from_json(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::PriorSample => {
            let paths = cmd_prior_sample(&load_config(cli)?, &cli.out)?;
            println!("wrote {} prior samples to {}", paths.len(), cli.out.display());
        }
        Command::Forward { input, output } => {
            cmd_forward(&load_config(cli)?, input, output)?;
            println!("wrote {}", output.display());
        }
        Command::FitSurrogate => {
            let zero_modes = cmd_fit_surrogate(&load_config(cli)?, &cli.out)?;
            println!(
                "surrogate written to {} ({zero_modes} unidentifiable modes)",
                cli.out.display()
            );
        }
        Command::Invert => {
            let summary = cmd_invert(&load_config(cli)?, &cli.out)?;
            match (summary.rel_l2_mean, summary.e_s_mean) {
                (Some(rel), Some(es)) => println!(
                    "rel_l2 mean {rel:.4}, spectral error mean {es:.4} over {} repeats",
                    summary.repeats.len()
                ),
                _ => println!("inversion finished with partial failures; see summary.json"),
            }
        }
        Command::Verify { suite } => {
            let which: VerifySuite = suite.parse()?;
            let seed = cli.seed.unwrap_or(0);
            let report = cmd_verify(which, &cli.out, seed)?;
            for s in &report.suites {
                println!(
                    "{}: {} ({})",
                    s.name,
                    if s.passed { "pass" } else { "FAIL" },
                    s.detail
                );
            }
            if !report.passed {
                return Err(DdisError::VerificationFailed(
                    "one or more verification suites failed".into(),
                ));
            }
        }
        Command::Bench { grid } => {
            let rows = cmd_bench(grid, &cli.out)?;
            println!("wrote {} bench rows to {}", rows.len(), cli.out.join("bench.csv").display());
        }
        Command::Spectrum { input, output } => {
            cmd_spectrum(&load_config(cli)?, input, output)?;
            println!("wrote {}", output.display());
        }
    }
    Ok(())
}

fn exit_code(err: &DdisError) -> u8 {
    match err {
        DdisError::VerificationFailed(_) => 2,
        DdisError::Io(_) | DdisError::Format(_) | DdisError::Json(_) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
