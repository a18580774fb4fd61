use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use riskal::dataset::{generate, save_csv};
use riskal::harness::{emit, load_report, run_experiment, ExperimentConfig, ReportFormat, Variant};

#[derive(Parser)]
#[command(name = "riskal", version, about = "Risk-based active learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic dataset described by a config file as CSV.
    Generate {
        /// JSON experiment config; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run repeated paired experiments and write the report files.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Number of repetitions (overrides the config).
        #[arg(long)]
        reps: Option<usize>,
        /// Comma-separated subset of plain,em (overrides the config).
        #[arg(long, value_delimiter = ',')]
        variants: Option<Vec<String>>,
        /// Master seed (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; defaults to one per core.
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long, default_value = "csv")]
        format: String,
    },
    /// Re-emit an existing report.json in another format and print a summary.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "csv")]
        format: String,
        /// Output directory; defaults to the input directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    let config = match path {
        None => ExperimentConfig::default(),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
        }
    };
    Ok(config)
}

fn print_summary(report: &riskal::harness::AggregateReport) {
    for v in &report.variants {
        let last = |curve: &[riskal::harness::QuantilePoint]| {
            curve.last().map_or(f64::NAN, |p| p.median)
        };
        println!(
            "{:>5}: reps={} median_queries={} first_cycle_share={:.3} final_decision_accuracy={:.4} final_macro_f1={:.4}",
            v.variant,
            v.query_counts.len(),
            v.median_queries,
            v.mean_first_cycle_fraction,
            last(&v.decision_accuracy),
            last(&v.macro_f1),
        );
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { config, out } => {
            let config = load_config(config.as_deref())?;
            let data = generate(&config.dataset)?;
            save_csv(&data, &out)?;
            eprintln!("wrote {} observations to {}", data.len(), out.display());
        }
        Command::Run {
            config,
            reps,
            variants,
            seed,
            out,
            threads,
            format,
        } => {
            let mut config = load_config(config.as_deref())?;
            if let Some(n) = reps {
                config.n_reps = n;
            }
            if let Some(s) = seed {
                config.master_seed = s;
            }
            if let Some(list) = variants {
                config.variants = list
                    .iter()
                    .map(|s| s.parse::<Variant>())
                    .collect::<riskal::Result<_>>()?;
            }
            if threads == Some(0) {
                bail!("--threads must be at least 1");
            }
            let format: ReportFormat = format.parse()?;
            config.validate()?;
            let report = run_experiment(&config, threads)?;
            for path in emit(&report, &out, format)? {
                eprintln!("wrote {}", path.display());
            }
            print_summary(&report);
        }
        Command::Report { input, format, out } => {
            let report = load_report(&input)?;
            let format: ReportFormat = format.parse()?;
            let dir = out.unwrap_or(input);
            for path in emit(&report, &dir, format)? {
                eprintln!("wrote {}", path.display());
            }
            print_summary(&report);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
