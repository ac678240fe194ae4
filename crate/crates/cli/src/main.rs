use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::info;

use hfo2ps::harness::{
    emit_run, emit_sweep, run_experiment, sweep, ExperimentConfig, OutputFormat, SweepAxis,
};
use hfo2ps::verify::run_invariant_suite;

#[derive(Parser)]
#[command(name = "hfo2ps", version, about = "Adversarial linear mixture MDP experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its result files.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the output directory of the config.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Output formats; repeat or comma-separate. Defaults to the config's list.
        #[arg(long, value_delimiter = ',', value_parser = parse_format)]
        format: Vec<OutputFormat>,
    },
    /// Repeat an experiment over values of one parameter.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// One of K, H, d, S.
        #[arg(long)]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        seeds: usize,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', value_parser = parse_format)]
        format: Vec<OutputFormat>,
    },
    /// Run the invariant suite.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_format(s: &str) -> std::result::Result<OutputFormat, String> {
    match s {
        "csv" => Ok(OutputFormat::Csv),
        "json" => Ok(OutputFormat::Json),
        "svg" => Ok(OutputFormat::Svg),
        _ => Err(format!("unknown format `{s}` (expected csv, json or svg)")),
    }
}

fn resolve_output(
    cfg: &ExperimentConfig,
    out_dir: Option<PathBuf>,
    format: Vec<OutputFormat>,
) -> (Option<PathBuf>, Vec<OutputFormat>) {
    let dir = out_dir.or_else(|| cfg.output.as_ref().map(|o| o.dir.clone()));
    let formats = if !format.is_empty() {
        format
    } else if let Some(o) = &cfg.output {
        o.formats.clone()
    } else {
        vec![OutputFormat::Csv, OutputFormat::Json]
    };
    (dir, formats)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run {
            config,
            seed,
            out_dir,
            format,
        } => {
            let mut cfg = ExperimentConfig::load(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            info!("running {} for {} episodes", cfg.algorithm.name(), cfg.episodes);
            let out = run_experiment(&cfg)?;
            let s = &out.summary;
            println!(
                "{} K={} final_regret={:.6} occupancy_regret={:.6} contained={}/{} unconverged={}",
                s.algorithm.name(),
                s.episodes,
                s.final_regret,
                s.occupancy_regret,
                s.contained_episodes,
                s.episodes,
                s.unconverged_projections
            );
            let (dir, formats) = resolve_output(&cfg, out_dir, format);
            if let Some(dir) = dir {
                for p in emit_run(&dir, Some(&cfg), &out, &formats)? {
                    println!("wrote {}", p.display());
                }
            }
            Ok(true)
        }
        Command::Sweep {
            config,
            axis,
            values,
            seeds,
            out_dir,
            format,
        } => {
            let cfg = ExperimentConfig::load(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            if seeds == 0 {
                bail!("--seeds must be positive");
            }
            info!("sweeping {axis} over {values:?} with {seeds} seeds");
            let table = sweep(&cfg, axis, &values, seeds)?;
            println!("{:>8} {:>5} {:>14} {:>12}", axis.symbol(), "runs", "mean_regret", "stderr");
            for r in &table.rows {
                println!("{:>8} {:>5} {:>14.6} {:>12.6}", r.value, r.runs, r.mean_regret, r.stderr);
            }
            if let Some(slope) = table.slope {
                println!("log-log slope {slope:.4}");
            }
            let (dir, formats) = resolve_output(&cfg, out_dir, format);
            if let Some(dir) = dir {
                for p in emit_sweep(&dir, &table, &formats)? {
                    println!("wrote {}", p.display());
                }
            }
            Ok(true)
        }
        Command::Verify { seed } => {
            let outcomes = run_invariant_suite(seed);
            let failed = outcomes.iter().filter(|o| !o.passed).count();
            for o in &outcomes {
                println!("{o}");
            }
            println!("{} checks, {failed} failed", outcomes.len());
            Ok(failed == 0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
