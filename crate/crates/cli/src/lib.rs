// SPDX-License-Identifier: MIT OR Apache-2.0

//! Plumbing behind the `fmosum` binary: flag and config-file resolution,
//! CSV ingestion, command dispatch and result serialization.

mod args;
mod io;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use fmosum::mosum::DetectionReport;
use fmosum::multiscale::{multiscale_detect, MultiscaleReport};
use fmosum::refine::{cpt_plot_data, lsd_refine, register_indices, CptRow, RegisteredCps};
use fmosum::simgen::{dgp1, dgp2, dgp3, scaling_sequences, Dgp, SimTruth};
use fmosum::{detect, ChangePointSet, DistSeq, ProbGrid};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

pub use args::{resolve, Cli, Command, FileConfig, Format, InputSpec, RunConfig, Task};
pub use io::{ingest_raw, ingest_raw_from, read_quantile_csv, read_quantile_csv_from, write_quantile_csv};

/// A failure tagged with the pipeline stage it came from.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("detection error: {0}")]
    Detection(#[from] fmosum::Error),
    #[error("output error: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Input(_) => 3,
            CliError::Detection(_) => 4,
            CliError::Output(_) => 5,
        }
    }
}

pub const THREADS_ENV: &str = "FMOSUM_THREADS";

/// Caps the global thread pool from `FMOSUM_THREADS`, if set.
pub fn init_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads = value
        .trim()
        .parse::<usize>()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| CliError::Config(format!("{THREADS_ENV} must be a positive integer, got '{value}'")))?;
    if rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().is_err() {
        log::debug!("thread pool already initialised");
    }
    Ok(())
}

pub fn load_input(spec: &InputSpec) -> Result<DistSeq, CliError> {
    match spec {
        InputSpec::Quantiles { path } => read_quantile_csv(path),
        InputSpec::Raw {
            path,
            day_column,
            value_column,
            strategy,
            grid_size,
        } => {
            let grid = ProbGrid::uniform(*grid_size).map_err(|e| CliError::Config(e.to_string()))?;
            ingest_raw(path, day_column, value_column, &grid, *strategy)
        }
    }
}

fn output_err(path: Option<&Path>, e: impl std::fmt::Display) -> CliError {
    match path {
        Some(p) => CliError::Output(format!("{}: {e}", p.display())),
        None => CliError::Output(format!("stdout: {e}")),
    }
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| output_err(Some(p), e))?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<(), CliError> {
    let mut w = open_output(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| output_err(path, e))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| output_err(path, e))
}

fn write_csv_rows<T: Serialize>(path: Option<&Path>, rows: &[T]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(open_output(path)?);
    for row in rows {
        w.serialize(row).map_err(|e| output_err(path, e))?;
    }
    w.flush().map_err(|e| output_err(path, e))
}

#[derive(Serialize)]
struct WithConfig<'a, T: Serialize> {
    #[serde(flatten)]
    result: T,
    config: &'a RunConfig,
}

/// JSON carries the resolved config inline; CSV written to a file gets a
/// `<output>.config.json` sidecar.
fn emit<T: Serialize, R: Serialize>(config: &RunConfig, json: T, csv_rows: &[R]) -> Result<(), CliError> {
    let path = config.output.as_deref();
    match config.format {
        Format::Json => write_json(path, &WithConfig { result: json, config }),
        Format::Csv => {
            write_csv_rows(path, csv_rows)?;
            match path {
                Some(p) => write_json(Some(&sidecar(p, ".config.json")), config),
                None => {
                    log::info!("resolved config: {}", serde_json::to_string(config).unwrap_or_default());
                    Ok(())
                }
            }
        }
    }
}

#[derive(Serialize)]
struct DetectOutput {
    #[serde(flatten)]
    report: DetectionReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    refined_change_points: Option<ChangePointSet>,
}

#[derive(Serialize)]
struct Rows<T> {
    rows: Vec<T>,
}

#[derive(Serialize)]
struct SupportRow {
    index: usize,
    support: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub n: usize,
    pub seconds: f64,
}

#[derive(Serialize)]
struct Truth<'a> {
    dgp: Dgp,
    seed: u64,
    n: usize,
    true_cps: &'a [usize],
    config: &'a RunConfig,
}

/// Generator failures are parameter problems, so they map to configuration errors.
pub fn simulate(dgp: Dgp, seed: u64, n: usize, grid: &ProbGrid) -> Result<SimTruth, CliError> {
    let sim = match dgp {
        Dgp::Dgp1 => dgp1(seed, n, grid),
        Dgp::Dgp2 => dgp2(seed, n, grid),
        Dgp::Dgp3 => dgp3(seed, n, grid),
        Dgp::Scaling => scaling_sequences(n.div_ceil(500), &[n], seed, grid).map(|mut v| v.remove(0)),
    };
    sim.map_err(|e| CliError::Config(e.to_string()))
}

/// Times one detection per length on scaling sequences, in the given order.
pub fn bench(lengths: &[usize], seed: u64, grid: &ProbGrid, config: &fmosum::DetectConfig) -> Result<Vec<BenchRow>, CliError> {
    let n_dup = lengths.iter().max().copied().unwrap_or(0).div_ceil(500);
    lengths
        .iter()
        .map(|&n| {
            let seq = scaling_sequences(n_dup, &[n], seed, grid)
                .map_err(|e| CliError::Config(e.to_string()))?
                .remove(0)
                .seq;
            let start = Instant::now();
            detect(&seq, config)?;
            let seconds = start.elapsed().as_secs_f64();
            log::info!("n = {n}: {seconds:.3} s");
            Ok(BenchRow { n, seconds })
        })
        .collect()
}

pub fn run(config: &RunConfig) -> Result<(), CliError> {
    match &config.task {
        Task::Detect { input, detect: dc, refine } => {
            let seq = load_input(input)?;
            let (cps, profile) = detect(&seq, dc)?;
            let refined = if *refine {
                Some(lsd_refine(&seq, &cps, dc.bandwidth, dc.alpha, dc.min_block_len)?)
            } else {
                None
            };
            let rows = refined.as_ref().unwrap_or(&cps).points().to_vec();
            let report = DetectionReport::new(dc, &cps, &profile);
            emit(
                config,
                DetectOutput {
                    report,
                    refined_change_points: refined,
                },
                &rows,
            )
        }
        Task::Multiscale { input, multiscale } => {
            let seq = load_input(input)?;
            let result = multiscale_detect(&seq, multiscale)?;
            let rows: Vec<SupportRow> = result
                .change_points
                .iter()
                .map(|p| SupportRow {
                    index: p.index,
                    support: p.peak as usize,
                })
                .collect();
            emit(config, MultiscaleReport::from(&result), &rows)
        }
        Task::Simulate {
            dgp,
            seed,
            n,
            grid_size,
            truth,
        } => {
            let grid = ProbGrid::uniform(*grid_size).map_err(|e| CliError::Config(e.to_string()))?;
            let sim = simulate(*dgp, *seed, *n, &grid)?;
            let path = config.output.as_deref();
            let mut w = open_output(path)?;
            write_quantile_csv(&sim.seq, &mut w).map_err(|e| output_err(path, e))?;
            w.flush().map_err(|e| output_err(path, e))?;
            let record = Truth {
                dgp: *dgp,
                seed: *seed,
                n: *n,
                true_cps: &sim.true_cps,
                config,
            };
            match truth {
                Some(t) => write_json(Some(t), &record),
                None => {
                    log::warn!("no truth sidecar written (output is stdout and --truth is not set)");
                    Ok(())
                }
            }
        }
        Task::CptPlot { input, g_grid, detect: dc } => {
            let seq = load_input(input)?;
            let rows: Vec<CptRow> = cpt_plot_data(&seq, g_grid, dc)?;
            emit(config, Rows { rows: rows.clone() }, &rows)
        }
        Task::Register { inputs, detect: dc } => {
            let seqs = inputs.par_iter().map(load_input).collect::<Result<Vec<_>, _>>()?;
            let cps = seqs
                .par_iter()
                .map(|s| detect(s, dc).map(|r| r.0))
                .collect::<Result<Vec<_>, _>>()?;
            let registered: RegisteredCps = register_indices(&seqs, &cps)?;
            let rows = registered.entries.clone();
            emit(config, registered, &rows)
        }
        Task::Bench {
            lengths,
            seed,
            grid_size,
            detect: dc,
        } => {
            let grid = ProbGrid::uniform(*grid_size).map_err(|e| CliError::Config(e.to_string()))?;
            let rows = bench(lengths, *seed, &grid, dc)?;
            emit(config, Rows { rows: rows.clone() }, &rows)
        }
    }
}

/// Resolves, runs and maps the outcome to a process exit code.
pub fn main_with(cli: &Cli) -> i32 {
    let outcome = init_threads().and_then(|_| resolve(cli)).and_then(|config| run(&config));
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("fmosum: {e}");
            e.exit_code()
        }
    }
}
