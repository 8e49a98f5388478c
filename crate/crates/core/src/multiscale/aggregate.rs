// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use super::trajectory::Trajectory;

/// Trajectory points kept for aggregation: the lowest `p#` bandwidths with
/// `p# = max(⌈m/2⌉, min_len)`. Empty when `m < min_len`.
pub fn aggregation_support(traj: &Trajectory, min_len: usize) -> Vec<(usize, usize)> {
    let m = traj.len();
    if m < min_len.max(1) {
        return Vec::new();
    }
    let mut gs: Vec<usize> = traj.points.iter().map(|p| p.1).collect();
    gs.sort_unstable();
    let p = m.div_ceil(2).max(min_len).min(m);
    let theta = gs[p - 1];
    traj.points.iter().copied().filter(|p| p.1 <= theta).collect()
}

/// Median index of the aggregation support, rounded half away from zero.
pub fn aggregate_trajectory(traj: &Trajectory, min_len: usize) -> Option<usize> {
    let support = aggregation_support(traj, min_len);
    if support.is_empty() {
        return None;
    }
    let mut idx: Vec<usize> = support.iter().map(|p| p.0).collect();
    idx.sort_unstable();
    let k = idx.len();
    let median = if k % 2 == 1 {
        idx[k / 2] as f64
    } else {
        0.5 * (idx[k / 2 - 1] + idx[k / 2]) as f64
    };
    Some(median.round() as usize)
}

/// How close a later-batch candidate may come to already merged points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeRadius {
    /// The same radius for every candidate.
    Fixed(f64),
    /// `ε·G` of the bandwidth that detected the candidate.
    DetectingBandwidth,
}

impl Default for MergeRadius {
    fn default() -> Self {
        MergeRadius::Fixed(15.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MergeCandidate {
    pub batch: usize,
    pub index: usize,
    pub radius: f64,
}

/// First-batch indices plus later candidates (in batch, then index order)
/// farther than their radius from everything merged so far; sorted.
pub fn merge_batches(candidates: &[MergeCandidate]) -> Vec<usize> {
    let mut sorted = candidates.to_vec();
    sorted.sort_by_key(|c| (c.batch, c.index));
    let first = sorted.first().map(|c| c.batch);
    let mut merged: Vec<usize> = Vec::new();
    for c in sorted {
        let keep = Some(c.batch) == first
            || merged.is_empty()
            || merged
                .iter()
                .all(|&k| (k.abs_diff(c.index) as f64) > c.radius);
        if keep {
            merged.push(c.index);
        }
    }
    merged.sort_unstable();
    merged.dedup();
    merged
}
