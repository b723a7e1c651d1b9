//! `pear`: dataset generation, training runs, sweeps, aggregation and the
//! verification suite.

mod aggregate;
mod experiment;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use pear::verify::{format_reports, run_suite, Mutation};

use experiment::{Axis, ExperimentConfig, Method, Task};

#[derive(Parser)]
#[command(name = "pear", version, about = "Projected-error regret gradients for predict-then-optimize")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write one synthetic dataset file per seed into the --out directory.
    Gen(ExpArgs),
    /// Train and evaluate each seed, appending rows to the --out file.
    Run(ExpArgs),
    /// Repeat `run` over the values of one hyperparameter axis.
    Sweep {
        #[command(flatten)]
        exp: ExpArgs,
        #[arg(long, value_enum)]
        axis: Axis,
        /// Axis values; defaults to the standard grid for the axis.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        values: Vec<f64>,
    },
    /// Mean ± std of regret across seeds for result files.
    Aggregate {
        files: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the verification suite; exit status 1 if any check fails.
    Verify {
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        #[arg(long, default_value = "verify.csv")]
        out: PathBuf,
        /// Test hook: corrupt the gradient recovery step.
        #[arg(long, hide = true)]
        inject_bug: bool,
    },
}

#[derive(Args, Clone)]
struct ExpArgs {
    #[arg(long, value_enum, default_value = "shortest_path")]
    task: Task,
    #[arg(long, value_enum, default_value = "pear")]
    method: Method,
    #[arg(long, default_value_t = 2)]
    deg: u32,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
    seeds: Vec<u64>,
    #[arg(long, default_value_t = 0.1)]
    lambda: f64,
    #[arg(long, default_value_t = 0.1)]
    beta: f64,
    /// `cross` (shortest path), capacity ratios (knapsack) or lower bounds
    /// (portfolio), comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    shift: Vec<String>,
    #[arg(long, default_value = "results.csv")]
    out: PathBuf,
    #[arg(long, default_value_t = 600.0)]
    max_seconds: f64,
    #[arg(long, default_value_t = 200)]
    max_epochs: usize,
    /// Train, validation and test sizes.
    #[arg(long, value_delimiter = ',', default_values_t = [1000, 500, 500])]
    sizes: Vec<usize>,
    /// Asset count for the synthetic portfolio task.
    #[arg(long, default_value_t = 20)]
    assets: usize,
    /// Run the verification suite first and stop if it fails.
    #[arg(long)]
    verify: bool,
}

impl ExpArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let [train, val, test] = self.sizes[..] else {
            anyhow::bail!("--sizes takes exactly three values, got {}", self.sizes.len());
        };
        Ok(ExperimentConfig {
            task: self.task,
            method: self.method,
            deg: self.deg,
            noise: self.noise,
            seeds: self.seeds.clone(),
            lambda: self.lambda,
            beta: self.beta,
            shift: self.shift.clone(),
            out: self.out.clone(),
            max_seconds: self.max_seconds,
            max_epochs: self.max_epochs,
            sizes: [train, val, test],
            assets: self.assets,
        })
    }
}

fn verify(seeds: &[u64], out: &PathBuf, mutation: Mutation) -> Result<bool> {
    let mut reports = Vec::new();
    for &seed in seeds {
        reports.extend(run_suite(seed, mutation)?);
    }
    let text = format_reports(&reports);
    fs::write(out, &text).with_context(|| format!("writing {}", out.display()))?;
    let failed: Vec<_> = reports.iter().filter(|r| !r.pass).collect();
    for r in &failed {
        eprintln!("FAILED {} ({}): error {:e} > {:e}", r.name, r.descriptor, r.max_error, r.tolerance);
    }
    eprintln!("{} checks, {} failed", reports.len(), failed.len());
    Ok(failed.is_empty())
}

fn pre_verify(exp: &ExpArgs) -> Result<bool> {
    if !exp.verify {
        return Ok(true);
    }
    let out = exp.out.with_extension("verify.csv");
    verify(&[0], &out, Mutation::None)
}

fn main_inner(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Gen(exp) => {
            let cfg = exp.config()?;
            cfg.validate()?;
            for path in experiment::generate_files(&cfg, &exp.out)? {
                println!("{}", path.display());
            }
            Ok(true)
        }
        Command::Run(exp) => {
            if !pre_verify(&exp)? {
                return Ok(false);
            }
            experiment::run(&exp.config()?)?;
            Ok(true)
        }
        Command::Sweep { exp, axis, values } => {
            if !pre_verify(&exp)? {
                return Ok(false);
            }
            let values = if values.is_empty() { axis.default_values() } else { values };
            experiment::sweep(&exp.config()?, axis, &values)?;
            Ok(true)
        }
        Command::Aggregate { files, out } => {
            let text = aggregate::summarize(&aggregate::collect(&files)?);
            match out {
                Some(path) => fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?,
                None => print!("{text}"),
            }
            Ok(true)
        }
        Command::Verify {
            seeds,
            out,
            inject_bug,
        } => {
            let mutation = if inject_bug {
                Mutation::FlipRecoverySign
            } else {
                Mutation::None
            };
            verify(&seeds, &out, mutation)
        }
    }
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
