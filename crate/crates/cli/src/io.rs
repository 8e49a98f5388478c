// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use fmosum::distrib::{estimate_quantile, Strategy};
use fmosum::{DistSeq, ProbGrid, QuantileFunction};
use rayon::prelude::*;

use crate::CliError;

fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn csv_error(source: &str, e: csv::Error) -> CliError {
    match e.position() {
        Some(p) => CliError::Input(format!("{source}, line {}: {e}", p.line())),
        None => CliError::Input(format!("{source}: {e}")),
    }
}

pub fn read_quantile_csv(path: &Path) -> Result<DistSeq, CliError> {
    read_quantile_csv_from(open(path)?, &path.display().to_string())
}

/// First record holds the probability levels; a non-numeric first header
/// cell marks a leading column of integer time labels.
pub fn read_quantile_csv_from<R: Read>(reader: R, source: &str) -> Result<DistSeq, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| csv_error(source, e))?,
        None => return Err(CliError::Input(format!("{source}: file is empty"))),
    };
    let labelled = header.get(0).is_none_or(|c| c.parse::<f64>().is_err());
    let skip = usize::from(labelled);
    let levels = header
        .iter()
        .skip(skip)
        .map(|c| c.parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Input(format!("{source}, line 1: bad probability level: {e}")))?;
    let grid = ProbGrid::new(levels).map_err(|e| CliError::Input(format!("{source}, line 1: {e}")))?;

    let mut elements = Vec::new();
    let mut labels = Vec::new();
    for record in records {
        let record = record.map_err(|e| csv_error(source, e))?;
        let line = line_of(&record);
        let bad = |what: String| CliError::Input(format!("{source}, line {line}: {what}"));
        if labelled {
            let cell = record.get(0).unwrap_or_default();
            labels.push(
                cell.parse::<i64>()
                    .map_err(|_| bad(format!("time label '{cell}' is not an integer")))?,
            );
        }
        let values = record
            .iter()
            .skip(skip)
            .map(|c| c.parse::<f64>().map_err(|_| bad(format!("'{c}' is not a number"))))
            .collect::<Result<Vec<_>, _>>()?;
        elements.push(QuantileFunction::new(grid.clone(), values).map_err(|e| bad(e.to_string()))?);
    }
    if elements.is_empty() {
        return Err(CliError::Input(format!("{source}: no distributions after the header")));
    }
    let seq = DistSeq::from_quantiles(&elements).map_err(|e| CliError::Input(format!("{source}: {e}")))?;
    if labelled {
        seq.with_time_labels(labels)
            .map_err(|e| CliError::Input(format!("{source}: {e}")))
    } else {
        Ok(seq)
    }
}

/// Values are written in shortest round-trip form, so re-reading is exact.
pub fn write_quantile_csv<W: Write>(seq: &DistSeq, writer: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let labels = seq.time_labels();
    let mut header: Vec<String> = Vec::with_capacity(seq.grid().len() + 1);
    if labels.is_some() {
        header.push("label".into());
    }
    header.extend(seq.grid().points().iter().map(f64::to_string));
    w.write_record(&header)?;
    for (i, row) in seq.rows().enumerate() {
        let mut record: Vec<String> = Vec::with_capacity(row.len() + 1);
        if let Some(l) = labels {
            record.push(l[i].to_string());
        }
        record.extend(row.iter().map(f64::to_string));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn ingest_raw(
    path: &Path,
    day_column: &str,
    value_column: &str,
    grid: &ProbGrid,
    strategy: Strategy,
) -> Result<DistSeq, CliError> {
    ingest_raw_from(open(path)?, &path.display().to_string(), day_column, value_column, grid, strategy)
}

/// Groups `(day, value)` rows by day and estimates one quantile function per
/// day, ordered by day.
pub fn ingest_raw_from<R: Read>(
    reader: R,
    source: &str,
    day_column: &str,
    value_column: &str,
    grid: &ProbGrid,
    strategy: Strategy,
) -> Result<DistSeq, CliError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_error(source, e))?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Input(format!("{source}: no column named '{name}'")))
    };
    let (day_at, value_at) = (column(day_column)?, column(value_column)?);

    let mut days: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(source, e))?;
        let line = line_of(&record);
        let field = |at: usize| record.get(at).unwrap_or_default();
        let day = field(day_at).parse::<i64>().map_err(|_| {
            CliError::Input(format!("{source}, line {line}: day '{}' is not an integer", field(day_at)))
        })?;
        let value = field(value_at)
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| {
                CliError::Input(format!("{source}, line {line}: value '{}' is not a finite number", field(value_at)))
            })?;
        days.entry(day).or_default().push(value);
    }
    if days.is_empty() {
        return Err(CliError::Input(format!("{source}: no data rows")));
    }
    let groups: Vec<(i64, Vec<f64>)> = days.into_iter().collect();
    let elements = groups
        .par_iter()
        .map(|(day, samples)| {
            estimate_quantile(samples, grid, strategy, None)
                .map_err(|e| CliError::Input(format!("{source}: day {day}: {e}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let labels = groups.iter().map(|g| g.0).collect();
    DistSeq::from_quantiles(&elements)
        .and_then(|s| s.with_time_labels(labels))
        .map_err(|e| CliError::Input(format!("{source}: {e}")))
}
