// SPDX-License-Identifier: MIT OR Apache-2.0

//! Multiscale detection: single-bandwidth detections over a bandwidth grid
//! are linked into trajectories, each trajectory is aggregated into one
//! estimate, and estimates from successive batches are merged.

mod aggregate;
mod cpi;
mod trajectory;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distrib::DistSeq;
use crate::error::{Error, Result};
use crate::mosum::{epsilon, ChangePoint, ChangePointSet, DetectConfig};

pub use aggregate::{aggregate_trajectory, aggregation_support, merge_batches, MergeCandidate, MergeRadius};
pub use cpi::{band_search, build_cpi, grid_percentile, select_seeds, BandMode, CpiMatrix};
pub use trajectory::{
    coarse_search, identify_trajectories, intersection_point, prune_trajectory, refine_trajectories,
    BandRule, Trajectory,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiscaleConfig {
    pub g_grid: Vec<usize>,
    /// Settings shared by every bandwidth (its own bandwidth is ignored).
    pub detect: DetectConfig,
    /// Grid percentiles bounding the first batch's seed row.
    pub seed_percentiles: (f64, f64),
    pub min_traj_len: usize,
    pub merge_radius: MergeRadius,
    /// Seeds the generator that breaks ties while pruning.
    pub seed: u64,
}

impl MultiscaleConfig {
    pub fn new(g_grid: Vec<usize>) -> Self {
        let g0 = g_grid.first().copied().unwrap_or(1);
        Self {
            g_grid,
            detect: DetectConfig::new(g0),
            seed_percentiles: (0.1, 0.5),
            min_traj_len: 4,
            merge_radius: MergeRadius::default(),
            seed: 0,
        }
    }

    /// `start:stop:step`, inclusive of `stop` when it is on the lattice.
    pub fn parse_grid(spec: &str) -> Result<Vec<usize>> {
        let parts: Vec<&str> = spec.split(':').collect();
        let parse = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::param(format!("bad bandwidth grid '{spec}'")))
        };
        let (a, b, step) = match parts.as_slice() {
            [a, b] => (parse(a)?, parse(b)?, 1),
            [a, b, s] => (parse(a)?, parse(b)?, parse(s)?),
            _ => return Err(Error::param(format!("bandwidth grid '{spec}' is not A:B[:STEP]"))),
        };
        if step == 0 || b < a {
            return Err(Error::param(format!("bandwidth grid '{spec}' is empty")));
        }
        let grid: Vec<usize> = (a..=b).step_by(step).collect();
        cpi::validate_grid(&grid)?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        cpi::validate_grid(&self.g_grid)?;
        self.detect.validate()?;
        let (lo, hi) = self.seed_percentiles;
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return Err(Error::param("seed percentiles must satisfy 0 ≤ low ≤ high ≤ 1"));
        }
        if self.min_traj_len == 0 {
            return Err(Error::param("minimum trajectory length must be at least 1"));
        }
        if let MergeRadius::Fixed(r) = self.merge_radius {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(Error::param("merge radius must be a finite non-negative number"));
            }
        }
        Ok(())
    }

    pub fn band_rule(&self) -> BandRule {
        BandRule {
            min_block_len: self.detect.min_block_len,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultiscaleResult {
    /// Merged estimates; `peak` holds the number of supporting bandwidths.
    pub change_points: ChangePointSet,
    pub cpi: CpiMatrix,
    pub trajectories: Vec<Trajectory>,
    /// Aggregate of each trajectory, aligned with `trajectories`.
    pub aggregates: Vec<Option<usize>>,
}

fn merge_radius(config: &MultiscaleConfig, traj: &Trajectory, aggregate: usize) -> f64 {
    match config.merge_radius {
        MergeRadius::Fixed(r) => r,
        MergeRadius::DetectingBandwidth => {
            let g = traj
                .points
                .iter()
                .min_by_key(|&&(i, g)| (i.abs_diff(aggregate), g))
                .map(|p| p.1)
                .expect("aggregated trajectories are non-empty");
            epsilon(config.detect.min_block_len, g) * g as f64
        }
    }
}

pub fn multiscale_detect(seq: &DistSeq, config: &MultiscaleConfig) -> Result<MultiscaleResult> {
    config.validate()?;
    let mut cpi = build_cpi(seq, &config.g_grid, &config.detect)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let trajectories = identify_trajectories(&mut cpi, config.seed_percentiles, config.band_rule(), &mut rng);
    let aggregates: Vec<Option<usize>> = trajectories
        .iter()
        .map(|t| aggregate_trajectory(t, config.min_traj_len))
        .collect();

    let candidates: Vec<MergeCandidate> = trajectories
        .iter()
        .zip(&aggregates)
        .filter_map(|(t, a)| {
            a.map(|index| MergeCandidate {
                batch: t.batch,
                index,
                radius: merge_radius(config, t, index),
            })
        })
        .collect();
    let merged = merge_batches(&candidates);
    let points = merged
        .iter()
        .map(|&k| {
            let support = trajectories
                .iter()
                .zip(&aggregates)
                .filter(|(_, a)| **a == Some(k))
                .map(|(t, _)| aggregation_support(t, config.min_traj_len).len())
                .max()
                .unwrap_or(0);
            ChangePoint {
                peak: support as f64,
                ..ChangePoint::at(k)
            }
        })
        .collect();
    Ok(MultiscaleResult {
        change_points: ChangePointSet::new(points)?,
        cpi,
        trajectories,
        aggregates,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryReport {
    pub batch: usize,
    pub points: Vec<[usize; 2]>,
    pub aggregate: Option<usize>,
}

/// Plotting data: marks as `[row, index]` (row 0-based into `g_grid`),
/// trajectory points as `[index, bandwidth]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiscaleReport {
    pub g_grid: Vec<usize>,
    pub marks: Vec<[usize; 2]>,
    pub trajectories: Vec<TrajectoryReport>,
    pub merged: Vec<usize>,
}

impl From<&MultiscaleResult> for MultiscaleReport {
    fn from(r: &MultiscaleResult) -> Self {
        Self {
            g_grid: r.cpi.g_grid().to_vec(),
            marks: r.cpi.marks().into_iter().map(|(l, i)| [l, i]).collect(),
            trajectories: r
                .trajectories
                .iter()
                .zip(&r.aggregates)
                .map(|(t, a)| TrajectoryReport {
                    batch: t.batch,
                    points: t.points.iter().map(|&(i, g)| [i, g]).collect(),
                    aggregate: *a,
                })
                .collect(),
            merged: r.change_points.indices(),
        }
    }
}
