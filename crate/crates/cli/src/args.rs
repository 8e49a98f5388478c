// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use fmosum::distrib::{Strategy, DEFAULT_GRID_SIZE};
use fmosum::multiscale::{MergeRadius, MultiscaleConfig};
use fmosum::simgen::Dgp;
use fmosum::DetectConfig;
use serde::Serialize;

use crate::CliError;

#[derive(Parser, Debug)]
#[command(name = "fmosum", version, about = "Change-point detection for sequences of distributions")]
pub struct Cli {
    /// Flat `key = value` file using the long flag names as keys; flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Destination file (stdout when omitted).
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// json or csv.
    #[arg(long, global = true)]
    pub format: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Single-bandwidth detection.
    Detect {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        detect: DetectArgs,
        /// Add change points found in the local squared deviations.
        #[arg(long)]
        refine: bool,
    },
    /// Detection over a grid of bandwidths with trajectory aggregation.
    Multiscale {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        detect: DetectArgs,
        #[command(flatten)]
        multi: MultiscaleArgs,
    },
    /// Generate a synthetic sequence and its true change points.
    Simulate {
        /// dgp1, dgp2, dgp3 or scaling (a bare number selects dgpN).
        #[arg(long)]
        dgp: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(short = 'n', long = "length")]
        n: Option<usize>,
        #[arg(long)]
        grid_size: Option<usize>,
        /// Truth sidecar path (defaults to `<output>.truth.json`).
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Estimates and their stability across a bandwidth grid.
    CptPlot {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        detect: DetectArgs,
        #[arg(long)]
        g_grid: Option<String>,
    },
    /// Detect on several labelled sequences and place the change points on
    /// the union of their time labels.
    Register {
        /// Quantile-matrix CSV with a label column (repeatable).
        #[arg(long = "input")]
        inputs: Vec<PathBuf>,
        /// Raw samples CSV (repeatable).
        #[arg(long = "raw")]
        raws: Vec<PathBuf>,
        #[command(flatten)]
        raw: RawArgs,
        #[command(flatten)]
        detect: DetectArgs,
    },
    /// Time single-bandwidth detection on sequences of increasing length.
    Bench {
        /// A:B:STEP or a comma-separated list.
        #[arg(long)]
        lengths: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        grid_size: Option<usize>,
        #[command(flatten)]
        detect: DetectArgs,
    },
}

#[derive(Args, Debug, Clone, Default)]
pub struct RawArgs {
    #[arg(long)]
    pub day_column: Option<String>,
    #[arg(long)]
    pub value_column: Option<String>,
    /// KSE (kernel smoothing) or SQI (sample quantiles).
    #[arg(long)]
    pub strategy: Option<String>,
    #[arg(long)]
    pub grid_size: Option<usize>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct InputArgs {
    /// Quantile-matrix CSV: probability levels on the first row, optional
    /// leading column of integer time labels.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Raw samples CSV with a day column and a value column.
    #[arg(long)]
    pub raw: Option<PathBuf>,
    #[command(flatten)]
    pub raw_opts: RawArgs,
}

#[derive(Args, Debug, Clone, Default)]
pub struct DetectArgs {
    #[arg(long)]
    pub bandwidth: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Minimum block length `L_m`; sets `ε = min(0.5, L_m/G)`.
    #[arg(long)]
    pub min_block: Option<usize>,
    #[arg(long)]
    pub boundary_c: Option<f64>,
    /// Skip the boundary extension of the scan statistic.
    #[arg(long)]
    pub no_boundary: bool,
}

#[derive(Args, Debug, Clone, Default)]
pub struct MultiscaleArgs {
    /// Bandwidth grid A:B[:STEP].
    #[arg(long)]
    pub g_grid: Option<String>,
    /// Seed for tie-breaking while pruning trajectories.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub min_traj_len: Option<usize>,
    /// A fixed radius, or `bandwidth` for ε·G of the detecting bandwidth.
    #[arg(long)]
    pub merge_radius: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            other => Err(format!("unknown format '{other}' (expected json or csv)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InputSpec {
    Quantiles {
        path: PathBuf,
    },
    Raw {
        path: PathBuf,
        day_column: String,
        value_column: String,
        strategy: Strategy,
        grid_size: usize,
    },
}

/// Fully resolved invocation, echoed into every output.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    #[serde(flatten)]
    pub task: Task,
    pub output: Option<PathBuf>,
    pub format: Format,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Task {
    Detect {
        input: InputSpec,
        detect: DetectConfig,
        refine: bool,
    },
    Multiscale {
        input: InputSpec,
        multiscale: MultiscaleConfig,
    },
    Simulate {
        dgp: Dgp,
        seed: u64,
        n: usize,
        grid_size: usize,
        truth: Option<PathBuf>,
    },
    CptPlot {
        input: InputSpec,
        g_grid: Vec<usize>,
        detect: DetectConfig,
    },
    Register {
        inputs: Vec<InputSpec>,
        detect: DetectConfig,
    },
    Bench {
        lengths: Vec<usize>,
        seed: u64,
        grid_size: usize,
        detect: DetectConfig,
    },
}

const KNOWN_KEYS: &[&str] = &[
    "input",
    "raw",
    "day-column",
    "value-column",
    "strategy",
    "grid-size",
    "bandwidth",
    "alpha",
    "min-block",
    "boundary-c",
    "no-boundary",
    "refine",
    "g-grid",
    "seed",
    "min-traj-len",
    "merge-radius",
    "dgp",
    "length",
    "truth",
    "lengths",
    "output",
    "format",
];

const DEFAULT_SIM_LENGTH: usize = 800;
const BENCH_BANDWIDTH: usize = 80;
const BENCH_MIN_BLOCK: usize = 16;
const BENCH_LENGTHS: &str = "2000:20000:2000";

/// Values read from a config file, keyed by long flag name.
#[derive(Debug, Default)]
pub struct FileConfig {
    values: BTreeMap<String, String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// `key = value` (or `key: value`) per line; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut values = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .or_else(|| line.split_once(':').filter(|(k, _)| !k.contains(' ')))
                .ok_or_else(|| format!("line {}: expected key = value", no + 1))?;
            let key = key.trim().trim_start_matches("--").replace('_', "-");
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(format!("line {}: unknown key '{key}'", no + 1));
            }
            values.insert(key, value.trim().to_string());
        }
        Ok(Self { values })
    }

    fn pick<T>(&self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        self.values
            .get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| CliError::Config(format!("config key '{key}' = '{v}': {e}")))
            })
            .transpose()
    }

    fn switch(&self, key: &str, flag: bool) -> Result<bool, CliError> {
        Ok(flag || self.pick::<bool>(key, None)?.unwrap_or(false))
    }
}

fn config_err(e: impl Display) -> CliError {
    CliError::Config(e.to_string())
}

fn parse_with<T>(s: Option<String>, what: &str) -> Result<Option<T>, CliError>
where
    T: FromStr,
    T::Err: Display,
{
    s.map(|s| s.parse::<T>().map_err(|e| CliError::Config(format!("{what}: {e}"))))
        .transpose()
}

fn resolve_detect(file: &FileConfig, a: &DetectArgs, default_g: Option<usize>, default_lm: usize) -> Result<DetectConfig, CliError> {
    let g = file
        .pick("bandwidth", a.bandwidth)?
        .or(default_g)
        .ok_or_else(|| CliError::Config("--bandwidth is required".into()))?;
    let mut config = DetectConfig::new(g).min_block_len(file.pick("min-block", a.min_block)?.unwrap_or(default_lm));
    if let Some(alpha) = file.pick("alpha", a.alpha)? {
        config.alpha = alpha;
    }
    if let Some(c) = file.pick("boundary-c", a.boundary_c)? {
        config.boundary_c = c;
    }
    config.boundary_correction = !file.switch("no-boundary", a.no_boundary)?;
    config.validate().map_err(config_err)?;
    Ok(config)
}

fn resolve_grid_size(file: &FileConfig, flag: Option<usize>) -> Result<usize, CliError> {
    let m = file.pick("grid-size", flag)?.unwrap_or(DEFAULT_GRID_SIZE);
    if m < 3 {
        return Err(CliError::Config(format!("grid size must be at least 3, got {m}")));
    }
    Ok(m)
}

fn resolve_raw(file: &FileConfig, path: PathBuf, r: &RawArgs) -> Result<InputSpec, CliError> {
    Ok(InputSpec::Raw {
        path,
        day_column: file.pick("day-column", r.day_column.clone())?.unwrap_or_else(|| "day".into()),
        value_column: file
            .pick("value-column", r.value_column.clone())?
            .unwrap_or_else(|| "value".into()),
        strategy: parse_with(file.pick("strategy", r.strategy.clone())?, "strategy")?.unwrap_or(Strategy::Kse),
        grid_size: resolve_grid_size(file, r.grid_size)?,
    })
}

fn resolve_input(file: &FileConfig, a: &InputArgs) -> Result<InputSpec, CliError> {
    let input: Option<PathBuf> = file.pick("input", a.input.clone())?;
    let raw: Option<PathBuf> = file.pick("raw", a.raw.clone())?;
    match (input, raw) {
        (Some(path), None) => Ok(InputSpec::Quantiles { path }),
        (None, Some(path)) => resolve_raw(file, path, &a.raw_opts),
        (Some(_), Some(_)) => Err(CliError::Config("give either --input or --raw, not both".into())),
        (None, None) => Err(CliError::Config("an input file is required (--input or --raw)".into())),
    }
}

fn resolve_g_grid(file: &FileConfig, flag: Option<String>) -> Result<Vec<usize>, CliError> {
    let spec: String = file
        .pick("g-grid", flag)?
        .ok_or_else(|| CliError::Config("--g-grid is required".into()))?;
    MultiscaleConfig::parse_grid(&spec).map_err(config_err)
}

fn parse_lengths(spec: &str) -> Result<Vec<usize>, CliError> {
    let lengths = if spec.contains(':') {
        MultiscaleConfig::parse_grid(spec).map_err(config_err)?
    } else {
        spec.split(',')
            .map(|s| s.trim().parse::<usize>().map_err(|e| CliError::Config(format!("lengths '{spec}': {e}"))))
            .collect::<Result<Vec<_>, _>>()?
    };
    if lengths.is_empty() || lengths.contains(&0) {
        return Err(CliError::Config(format!("lengths '{spec}' must be positive")));
    }
    Ok(lengths)
}

fn parse_dgp(s: &str) -> Result<Dgp, CliError> {
    let name = if s.chars().all(|c| c.is_ascii_digit()) {
        format!("dgp{s}")
    } else {
        s.to_string()
    };
    name.parse().map_err(config_err)
}

fn parse_merge_radius(s: &str) -> Result<MergeRadius, CliError> {
    match s.to_ascii_lowercase().as_str() {
        "bandwidth" | "detecting-bandwidth" => Ok(MergeRadius::DetectingBandwidth),
        v => v
            .parse::<f64>()
            .map(MergeRadius::Fixed)
            .map_err(|e| CliError::Config(format!("merge radius '{s}': {e}"))),
    }
}

pub fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let output: Option<PathBuf> = file.pick("output", cli.output.clone())?;
    let format: Option<Format> = parse_with(file.pick("format", cli.format.clone())?, "format")?;

    let task = match &cli.command {
        Command::Detect { input, detect, refine } => Task::Detect {
            input: resolve_input(&file, input)?,
            detect: resolve_detect(&file, detect, None, fmosum::mosum::DEFAULT_MIN_BLOCK_LEN)?,
            refine: file.switch("refine", *refine)?,
        },
        Command::Multiscale { input, detect, multi } => {
            let g_grid = resolve_g_grid(&file, multi.g_grid.clone())?;
            let mut config = MultiscaleConfig::new(g_grid.clone());
            config.detect = resolve_detect(&file, detect, Some(g_grid[0]), fmosum::mosum::DEFAULT_MIN_BLOCK_LEN)?;
            if let Some(seed) = file.pick("seed", multi.seed)? {
                config.seed = seed;
            }
            if let Some(len) = file.pick("min-traj-len", multi.min_traj_len)? {
                config.min_traj_len = len;
            }
            if let Some(r) = file.pick::<String>("merge-radius", multi.merge_radius.clone())? {
                config.merge_radius = parse_merge_radius(&r)?;
            }
            config.validate().map_err(config_err)?;
            Task::Multiscale {
                input: resolve_input(&file, input)?,
                multiscale: config,
            }
        }
        Command::Simulate {
            dgp,
            seed,
            n,
            grid_size,
            truth,
        } => {
            let dgp = parse_dgp(
                &file
                    .pick::<String>("dgp", dgp.clone())?
                    .ok_or_else(|| CliError::Config("--dgp is required".into()))?,
            )?;
            if format == Some(Format::Json) {
                return Err(CliError::Config("simulate writes the quantile-matrix CSV format only".into()));
            }
            let truth = file.pick("truth", truth.clone())?.or_else(|| {
                output.as_ref().map(|o| {
                    let mut s = o.clone().into_os_string();
                    s.push(".truth.json");
                    PathBuf::from(s)
                })
            });
            Task::Simulate {
                dgp,
                seed: file.pick("seed", *seed)?.unwrap_or(0),
                n: file.pick("length", *n)?.unwrap_or(DEFAULT_SIM_LENGTH),
                grid_size: resolve_grid_size(&file, *grid_size)?,
                truth,
            }
        }
        Command::CptPlot { input, detect, g_grid } => {
            let g_grid = resolve_g_grid(&file, g_grid.clone())?;
            Task::CptPlot {
                input: resolve_input(&file, input)?,
                detect: resolve_detect(&file, detect, Some(g_grid[0]), fmosum::mosum::DEFAULT_MIN_BLOCK_LEN)?,
                g_grid,
            }
        }
        Command::Register {
            inputs,
            raws,
            raw,
            detect,
        } => {
            let specs: Vec<InputSpec> = match (inputs.is_empty(), raws.is_empty()) {
                (false, true) => inputs.iter().map(|p| InputSpec::Quantiles { path: p.clone() }).collect(),
                (true, false) => raws
                    .iter()
                    .map(|p| resolve_raw(&file, p.clone(), raw))
                    .collect::<Result<_, _>>()?,
                (false, false) => return Err(CliError::Config("give either --input or --raw files, not both".into())),
                (true, true) => return Err(CliError::Config("register needs at least one --input or --raw file".into())),
            };
            Task::Register {
                inputs: specs,
                detect: resolve_detect(&file, detect, None, fmosum::mosum::DEFAULT_MIN_BLOCK_LEN)?,
            }
        }
        Command::Bench {
            lengths,
            seed,
            grid_size,
            detect,
        } => Task::Bench {
            lengths: parse_lengths(
                &file
                    .pick::<String>("lengths", lengths.clone())?
                    .unwrap_or_else(|| BENCH_LENGTHS.into()),
            )?,
            seed: file.pick("seed", *seed)?.unwrap_or(0),
            grid_size: resolve_grid_size(&file, *grid_size)?,
            detect: resolve_detect(&file, detect, Some(BENCH_BANDWIDTH), BENCH_MIN_BLOCK)?,
        },
    };
    let default_format = match task {
        Task::Simulate { .. } | Task::Bench { .. } => Format::Csv,
        _ => Format::Json,
    };
    Ok(RunConfig {
        task,
        output,
        format: format.unwrap_or(default_format),
    })
}
