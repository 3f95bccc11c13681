//! `blab`: run metric, kernel, zero and experiment configs.

use blab_core::lab::{self, ExperimentConfig, ExperimentReport, LabError};
use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "blab", version, about = "Bergman kernel lab", allow_negative_numbers = true)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Lattice spacing, overriding the config.
    #[arg(long, global = true)]
    h: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Both set metrics for the config's pair, or the demo table.
    Metric { config: PathBuf },
    /// Fit the kernel and dump a field slice.
    Kernel { config: PathBuf },
    /// Zero verdict of the fitted kernel.
    Zeros { config: PathBuf },
    /// Run the config's experiment.
    Experiment { config: PathBuf },
}

const EXIT_ASSERT: u8 = 2;
const EXIT_CONFIG: u8 = 3;

fn load(path: &Path, cli: &Cli) -> Result<ExperimentConfig, LabError> {
    let text = std::fs::read_to_string(path).map_err(|e| LabError::Config(format!("{}: {e}", path.display())))?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    if let Some(h) = cli.h {
        cfg.h = h;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = Some(o.display().to_string());
    }
    if let Some(t) = cli.threads {
        cfg.threads = Some(t);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<ExperimentReport, LabError> {
    let (Cmd::Metric { config } | Cmd::Kernel { config } | Cmd::Zeros { config } | Cmd::Experiment { config }) = &cli.cmd;
    let cfg = load(config, cli)?;
    if let Some(n) = cfg.threads {
        // a second init in the same process is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let out = PathBuf::from(cfg.out.clone().unwrap_or_else(|| "blab-out".into()));
    let report = match cli.cmd {
        Cmd::Metric { .. } => lab::run_metric(&cfg)?,
        Cmd::Kernel { .. } => {
            let (rep, field) = lab::run_kernel(&cfg)?;
            std::fs::create_dir_all(&out)?;
            if !field.is_empty() {
                std::fs::write(out.join("kernel_field.csv"), field)?;
            }
            rep
        }
        Cmd::Zeros { .. } => lab::run_zeros(&cfg)?,
        Cmd::Experiment { .. } => lab::run_experiment(&cfg)?,
    };
    report.write(&out)?;
    Ok(report)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(rep) => {
            print!("{}", rep.to_csv());
            for a in &rep.assertions {
                println!("{} {} {}", if a.passed { "PASS" } else { "FAIL" }, a.name, a.detail);
            }
            if rep.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_ASSERT)
            }
        }
        Err(e) => {
            eprintln!("blab: {e}");
            if e.is_config() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
