use std::fmt::Write as _;
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use pear::datagen::{generate, split, substream, Dataset, GenConfig, STREAM_COVARIANCE, STREAM_WEIGHTS};
use pear::problems::{Benchmark, GridPathProblem, KnapsackProblem, MvoProblem, Orientation};
use pear::train::{fit, normalized_regret, prediction_mse, LinearModel, Loss, TrainConfig};

pub const RESULT_HEADER: &str =
    "task,method,deg,noise,lambda,beta,seed,shift,regret_pct,train_mse,wall_seconds,stop_reason";

/// Items in the knapsack benchmark.
pub const KNAPSACK_ITEMS: usize = 100;
pub const TRAIN_CAPACITY_RATIO: f64 = 0.5;
pub const MVO_RISK_AVERSION: f64 = 2.0;
/// Synthetic expected returns are the polynomial costs times this factor,
/// which puts them on the same scale as the covariance.
pub const MVO_RETURN_SCALE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Task {
    ShortestPath,
    Knapsack,
    MvoSynthetic,
}

impl Task {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::ShortestPath => "shortest_path",
            Self::Knapsack => "knapsack",
            Self::MvoSynthetic => "mvo_synthetic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Method {
    Pear,
    Mse,
    SpoPlus,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Pear => "pear",
            Self::Mse => "mse",
            Self::SpoPlus => "spo_plus",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub task: Task,
    pub method: Method,
    pub deg: u32,
    pub noise: f64,
    pub seeds: Vec<u64>,
    pub lambda: f64,
    pub beta: f64,
    /// Test-time constraint variants: `cross` for shortest path, capacity
    /// ratios for knapsack, lower bounds for the portfolio.
    pub shift: Vec<String>,
    pub out: PathBuf,
    pub max_seconds: f64,
    pub max_epochs: usize,
    pub sizes: [usize; 3],
    pub assets: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Shift {
    Cross,
    Capacity(f64),
    LowerBound(f64),
}

impl Shift {
    pub fn tag(&self) -> String {
        match self {
            Self::Cross => "cross".into(),
            Self::Capacity(v) | Self::LowerBound(v) => format!("{v}"),
        }
    }
}

impl ExperimentConfig {
    pub fn loss(&self) -> Loss {
        match self.method {
            Method::Pear => Loss::Pear {
                lambda_smooth: self.lambda,
                beta: self.beta,
            },
            Method::Mse => Loss::Mse,
            Method::SpoPlus => Loss::SpoPlus,
        }
    }

    pub fn shifts(&self) -> Result<Vec<Shift>> {
        self.shift
            .iter()
            .map(|s| {
                let s = s.trim();
                match self.task {
                    Task::ShortestPath => match s {
                        "cross" => Ok(Shift::Cross),
                        other => bail!("shortest-path shift must be `cross`, got `{other}`"),
                    },
                    Task::Knapsack => {
                        let v: f64 = s.parse().with_context(|| format!("capacity ratio `{s}`"))?;
                        if !(v > 0.0 && v < 1.0) {
                            bail!("capacity ratio {v} outside (0, 1)");
                        }
                        Ok(Shift::Capacity(v))
                    }
                    Task::MvoSynthetic => {
                        let v: f64 = s.parse().with_context(|| format!("lower bound `{s}`"))?;
                        Ok(Shift::LowerBound(v))
                    }
                }
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            bail!("seed list is empty");
        }
        if !(0.0..1.0).contains(&self.noise) {
            bail!("noise half-width {} outside [0, 1)", self.noise);
        }
        if self.method == Method::Pear && !(self.lambda > 0.0) {
            bail!("lambda must be positive");
        }
        if !(0.0..=1.0).contains(&self.beta) {
            bail!("beta {} outside [0, 1]", self.beta);
        }
        self.shifts()?;
        Ok(())
    }

    /// Lines echoed ahead of each block of result rows.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# task={} method={}", self.task.as_str(), self.method.as_str());
        let _ = writeln!(s, "# deg={} noise={} lambda={} beta={}", self.deg, self.noise, self.lambda, self.beta);
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        let _ = writeln!(s, "# seeds={} shift={}", seeds.join(";"), self.shift.join(";"));
        let _ = writeln!(
            s,
            "# max_seconds={} max_epochs={} sizes={};{};{} assets={}",
            self.max_seconds, self.max_epochs, self.sizes[0], self.sizes[1], self.sizes[2], self.assets
        );
        s
    }
}

/// The base benchmark for a seed, as used during training.
pub fn base_benchmark(cfg: &ExperimentConfig, seed: u64) -> Result<Benchmark> {
    Ok(match cfg.task {
        Task::ShortestPath => Benchmark::ShortestPath(GridPathProblem::default()),
        Task::Knapsack => {
            let mut rng = substream(seed, STREAM_WEIGHTS);
            Benchmark::Knapsack(KnapsackProblem::random(KNAPSACK_ITEMS, TRAIN_CAPACITY_RATIO, &mut rng)?)
        }
        Task::MvoSynthetic => {
            let mut rng = substream(seed, STREAM_COVARIANCE);
            Benchmark::Mvo(MvoProblem::random(cfg.assets, MVO_RISK_AVERSION, 0.0, &mut rng)?)
        }
    })
}

pub fn shifted_benchmark(base: &Benchmark, shift: &Shift) -> Result<Benchmark> {
    Ok(match (base, shift) {
        (Benchmark::ShortestPath(p), Shift::Cross) => {
            Benchmark::ShortestPath(GridPathProblem::new(p.rows, p.cols, Orientation::Cross))
        }
        (Benchmark::Knapsack(p), Shift::Capacity(r)) => Benchmark::Knapsack(p.with_ratio(*r)?),
        (Benchmark::Mvo(p), Shift::LowerBound(l)) => Benchmark::Mvo(p.with_lower_bound(*l)),
        _ => bail!("shift {shift:?} does not apply to this task"),
    })
}

pub fn dataset(cfg: &ExperimentConfig, bench: &Benchmark, seed: u64) -> Result<Dataset> {
    let gen = GenConfig::new(bench.cost_dim(), cfg.deg, cfg.noise, seed).with_sizes(cfg.sizes);
    let mut ds = generate(&gen)?;
    if cfg.task == Task::MvoSynthetic {
        ds.c = ds.c.scale(MVO_RETURN_SCALE);
    }
    Ok(ds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub seed: u64,
    pub shift: String,
    pub regret_pct: f64,
    pub train_mse: f64,
    pub wall_seconds: f64,
    pub stop_reason: String,
}

fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<ResultRow>> {
    let bench = base_benchmark(cfg, seed)?;
    let ds = dataset(cfg, &bench, seed)?;
    let (train, val, test) = split(&ds, cfg.sizes)?;
    let mut tc = TrainConfig::for_benchmark(&bench, cfg.loss());
    tc.max_seconds = cfg.max_seconds;
    tc.max_epochs = cfg.max_epochs;
    tc.seed = seed;
    let (model, hist) = fit(LinearModel::zeros(bench.cost_dim(), ds.config.p), &train, &val, &bench, &tc)?;
    let train_mse = prediction_mse(&model, &train)?;
    let row = |shift: String, regret_pct: f64| ResultRow {
        seed,
        shift,
        regret_pct,
        train_mse,
        wall_seconds: hist.wall_seconds,
        stop_reason: hist.stop_reason.as_str().into(),
    };
    let mut rows = vec![row("none".into(), normalized_regret(&model, &test, &bench)?)];
    // The same trained model is scored under every test-time variant.
    for shift in cfg.shifts()? {
        let shifted = shifted_benchmark(&bench, &shift)?;
        rows.push(row(shift.tag(), normalized_regret(&model, &test, &shifted)?));
    }
    Ok(rows)
}

pub fn format_row(cfg: &ExperimentConfig, r: &ResultRow) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{:.6},{:.6},{:.3},{}",
        cfg.task.as_str(),
        cfg.method.as_str(),
        cfg.deg,
        cfg.noise,
        cfg.lambda,
        cfg.beta,
        r.seed,
        r.shift,
        r.regret_pct,
        r.train_mse,
        r.wall_seconds,
        r.stop_reason
    )
}

/// Trains and evaluates every seed, appending rows to `cfg.out`. A failing
/// seed yields a row with stop reason `failed` and the run continues.
pub fn run(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let mut all = Vec::new();
    let mut block = cfg.echo();
    for &seed in &cfg.seeds {
        let rows = match run_seed(cfg, seed) {
            Ok(rows) => rows,
            Err(e) => {
                eprintln!("seed {seed}: {e:#}");
                vec![ResultRow {
                    seed,
                    shift: "none".into(),
                    regret_pct: f64::NAN,
                    train_mse: f64::NAN,
                    wall_seconds: 0.0,
                    stop_reason: "failed".into(),
                }]
            }
        };
        for r in &rows {
            let line = format_row(cfg, r);
            eprintln!("{line}");
            block.push_str(&line);
            block.push('\n');
        }
        all.extend(rows);
    }
    append_results(&cfg.out, &block)?;
    record_config(&cfg.out, cfg)?;
    Ok(all)
}

fn append_results(path: &Path, block: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    if fresh {
        writeln!(f, "{RESULT_HEADER}")?;
    }
    f.write_all(block.as_bytes())?;
    Ok(())
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct ConfigLog {
    runs: Vec<ExperimentConfig>,
}

pub fn config_path(results: &Path) -> PathBuf {
    let mut name = results.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".config.toml");
    results.with_file_name(name)
}

/// Appends `cfg` to the TOML log stored beside the results file.
fn record_config(results: &Path, cfg: &ExperimentConfig) -> Result<()> {
    let path = config_path(results);
    let mut log: ConfigLog = match fs::read_to_string(&path) {
        Ok(text) => toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?,
        Err(_) => ConfigLog::default(),
    };
    log.runs.push(cfg.clone());
    fs::write(&path, toml::to_string(&log)?).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    Beta,
    Lambda,
    Degree,
    Noise,
}

impl Axis {
    pub fn default_values(&self) -> Vec<f64> {
        match self {
            Self::Beta => vec![0.0, 0.05, 0.1, 0.2, 0.5],
            Self::Lambda => vec![0.01, 0.05, 0.1, 0.5, 1.0],
            Self::Degree => vec![2.0, 4.0, 6.0, 8.0],
            Self::Noise => vec![0.1, 0.3, 0.5],
        }
    }

    pub fn apply(&self, base: &ExperimentConfig, v: f64) -> Result<ExperimentConfig> {
        let mut cfg = base.clone();
        match self {
            Self::Beta => cfg.beta = v,
            Self::Lambda => cfg.lambda = v,
            Self::Noise => cfg.noise = v,
            Self::Degree => {
                if v < 1.0 || v.fract() != 0.0 {
                    bail!("degree {v} must be a positive integer");
                }
                cfg.deg = v as u32;
            }
        }
        Ok(cfg)
    }
}

pub fn sweep(base: &ExperimentConfig, axis: Axis, values: &[f64]) -> Result<Vec<ResultRow>> {
    if values.is_empty() {
        bail!("sweep needs at least one axis value");
    }
    let mut rows = Vec::new();
    for &v in values {
        rows.extend(run(&axis.apply(base, v)?)?);
    }
    Ok(rows)
}

/// Writes one dataset file per seed into `dir`.
pub fn generate_files(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut out = Vec::new();
    for &seed in &cfg.seeds {
        let bench = base_benchmark(cfg, seed)?;
        let ds = dataset(cfg, &bench, seed)?;
        let path = dir.join(format!("{}_deg{}_noise{}_seed{}.csv", cfg.task.as_str(), cfg.deg, cfg.noise, seed));
        fs::write(&path, ds.to_text()).with_context(|| format!("writing {}", path.display()))?;
        out.push(path);
    }
    Ok(out)
}
