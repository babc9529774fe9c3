use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use digs_harness::config::ExperimentConfig;
use digs_harness::output::{sweep_summary_csv, write_report};
use digs_harness::registry::{experiment, EXPERIMENTS, TARGETS};
use digs_harness::{ground_truth, run_experiment, sweep, HarnessError, RunReport, Tier};

#[derive(Parser)]
#[command(name = "digs", about = "Run sampling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Registered experiment id (see `list`).
    #[arg(long)]
    experiment: Option<String>,
    /// Experiment config file, instead of a registered id.
    #[arg(long, conflicts_with = "experiment")]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Tier::Desk)]
    tier: Tier,
    /// Run this single seed instead of the configured seed list.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// `key=value`, where key is a sweep alias or a dotted config path.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment.
    Run(Common),
    /// Run an experiment once per parameter value.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// List registered experiments and targets.
    List,
}

fn load(common: &Common) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match (&common.experiment, &common.config) {
        (Some(id), None) => experiment(id, common.tier)?,
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
                path: path.display().to_string(),
                source,
            })?;
            ExperimentConfig::from_json(&text)?
        }
        _ => return Err(HarnessError::config("give --experiment or --config")),
    };
    for o in &common.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| HarnessError::config(format!("override `{o}` is not key=value")))?;
        cfg = cfg.with_override(k, v)?;
    }
    if let Some(seed) = common.seed {
        cfg.seeds = vec![seed];
    }
    cfg.validate()?;
    Ok(cfg)
}

fn save(report: &RunReport, dir: &Path) -> Result<(), HarnessError> {
    let built = report.config.target.build()?;
    let reference = match built.as_mog() {
        Some(mog) => ground_truth(mog, report.config.metrics.reference_size, report.config.seeds[0]),
        None => Vec::new(),
    };
    write_report(report, &reference, dir)
}

fn print_summary(report: &RunReport) {
    for s in &report.summary {
        let mut line = format!("{:<14} calls/seed {:>12}", s.label, s.calls_per_seed);
        let fields = [("mmd", s.mmd), ("mae%", s.mae_percent), ("modes", s.modes_covered), ("nll", s.nll)];
        for (name, stat) in fields {
            if let Some(st) = stat {
                line.push_str(&format!("  {name} {:.4} ± {:.4}", st.mean, st.stderr));
            }
        }
        println!("{line}");
    }
}

fn execute(cli: Cli) -> Result<bool, HarnessError> {
    match cli.command {
        Command::List => {
            println!("experiments:");
            for (id, about) in EXPERIMENTS {
                println!("  {id:<18} {about}");
            }
            println!("targets:");
            for (name, _) in TARGETS {
                println!("  {name}");
            }
            Ok(false)
        }
        Command::Run(common) => {
            let cfg = load(&common)?;
            let report = run_experiment(&cfg)?;
            save(&report, &common.out)?;
            print_summary(&report);
            Ok(report.truncated)
        }
        Command::Sweep { common, param, values } => {
            let cfg = load(&common)?;
            let result = sweep(&cfg, &param, &values)?;
            for (v, report) in &result.reports {
                println!("{param} = {v}");
                print_summary(report);
                save(report, &common.out.join(format!("{param}={v}")))?;
            }
            let path = common.out.join("sweep_summary.csv");
            std::fs::write(&path, sweep_summary_csv(&result)).map_err(|source| HarnessError::Io {
                path: path.display().to_string(),
                source,
            })?;
            Ok(result.truncated())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => {
            eprintln!("warning: a sampler exhausted its call budget; results are truncated");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 1 })
        }
    }
}
