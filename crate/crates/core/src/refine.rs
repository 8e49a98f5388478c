// SPDX-License-Identifier: MIT OR Apache-2.0

//! Post-detection tools: local squared deviation (LSD) refinement,
//! change-point trajectory plot data, and registration of change points onto
//! a common time grid.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distrib::{DistSeq, QuantileFunction};
use crate::error::{Error, Result};
use crate::mosum::{detect, epsilon, scalar_mosum_detect, ChangePoint, ChangePointSet, DetectConfig};

/// `Yᵢ = d²(νᵢ, μ̂ᵢ)` where `μ̂ᵢ` is the Fréchet mean of the segment holding `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct LsdSequence {
    pub values: Vec<f64>,
    pub segment_means: Vec<QuantileFunction>,
    pub cps_used: ChangePointSet,
}

fn check_cps(n: usize, cps: &ChangePointSet) -> Result<()> {
    if let Some(p) = cps.iter().find(|p| p.index == 0 || p.index >= n) {
        return Err(Error::InvalidChangePoints(format!(
            "index {} is not inside (0, {n})",
            p.index
        )));
    }
    Ok(())
}

/// Segments are `(k_j, k_{j+1}]` in 1-based terms.
pub fn lsd_sequence(seq: &DistSeq, cps: &ChangePointSet) -> Result<LsdSequence> {
    let n = seq.len();
    check_cps(n, cps)?;
    let mut bounds = vec![0];
    bounds.extend(cps.indices());
    bounds.push(n);
    let mut values = Vec::with_capacity(n);
    let mut segment_means = Vec::with_capacity(bounds.len() - 1);
    for w in bounds.windows(2) {
        let mean = seq.frechet_mean(w[0]..w[1])?;
        values.extend((w[0]..w[1]).map(|i| seq.grid().sq_distance(seq.row(i), mean.values())));
        segment_means.push(mean);
    }
    Ok(LsdSequence {
        values,
        segment_means,
        cps_used: cps.clone(),
    })
}

/// Adds mean changes of the LSD sequence that lie farther than `εG` from
/// every point already in the set (checked in ascending order).
pub fn lsd_refine(
    seq: &DistSeq,
    cps: &ChangePointSet,
    bandwidth: usize,
    alpha: f64,
    min_block_len: usize,
) -> Result<ChangePointSet> {
    let lsd = lsd_sequence(seq, cps)?;
    let found = scalar_mosum_detect(&lsd.values, bandwidth, alpha, min_block_len)?;
    let radius = epsilon(min_block_len, bandwidth) * bandwidth as f64;
    let mut points = cps.points().to_vec();
    for p in found.iter() {
        if points
            .iter()
            .all(|q| (q.index.abs_diff(p.index) as f64) > radius)
        {
            points.push(ChangePoint {
                block_start: p.index,
                block_end: p.index,
                ..p.clone()
            });
        }
    }
    points.sort_by_key(|p| p.index);
    ChangePointSet::new(points)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CptRow {
    #[serde(rename = "G")]
    pub bandwidth: usize,
    pub index: usize,
    pub peak: f64,
    /// Bandwidths with an estimate within their own `εG` of this index.
    pub stability: usize,
    pub stable: bool,
}

/// Bandwidths at which an index must be found, strictly more than this, to
/// count as stable.
pub const STABILITY_MIN: usize = 3;

/// One detection per bandwidth; every estimate is listed with its stability.
pub fn cpt_plot_data(seq: &DistSeq, g_grid: &[usize], template: &DetectConfig) -> Result<Vec<CptRow>> {
    if g_grid.is_empty() || g_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("bandwidth grid must be non-empty and strictly increasing"));
    }
    let per_g = g_grid
        .par_iter()
        .map(|&g| {
            let config = DetectConfig {
                bandwidth: g,
                ..template.clone()
            };
            detect(seq, &config).map(|(cps, _)| (g, config.epsilon() * g as f64, cps))
        })
        .collect::<Result<Vec<_>>>()?;
    let stability = |i: usize| {
        per_g
            .iter()
            .filter(|(_, r, cps)| cps.iter().any(|p| (p.index.abs_diff(i) as f64) <= *r))
            .count()
    };
    Ok(per_g
        .iter()
        .flat_map(|(g, _, cps)| {
            cps.iter().map(move |p| {
                let s = stability(p.index);
                CptRow {
                    bandwidth: *g,
                    index: p.index,
                    peak: p.peak,
                    stability: s,
                    stable: s > STABILITY_MIN,
                }
            })
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegisteredCp {
    pub sequence_id: usize,
    pub original_index: usize,
    pub registered_index: usize,
    pub time_label: i64,
}

/// Change points of several sequences expressed on the union of their time
/// labels (1-based positions).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegisteredCps {
    pub union_grid: Vec<i64>,
    pub entries: Vec<RegisteredCp>,
}

pub fn register_indices(seqs: &[DistSeq], cps: &[ChangePointSet]) -> Result<RegisteredCps> {
    if seqs.len() != cps.len() {
        return Err(Error::param(format!(
            "{} sequences but {} change-point sets",
            seqs.len(),
            cps.len()
        )));
    }
    let labels = seqs
        .iter()
        .enumerate()
        .map(|(s, seq)| seq.time_labels().ok_or(Error::MissingTimeLabels(s)))
        .collect::<Result<Vec<_>>>()?;
    let mut union_grid: Vec<i64> = labels.iter().flat_map(|l| l.iter().copied()).collect();
    union_grid.sort_unstable();
    union_grid.dedup();

    let mut entries = Vec::new();
    for (s, (own, set)) in labels.iter().zip(cps).enumerate() {
        for k in set.indices() {
            if k == 0 || k > own.len() {
                return Err(Error::InvalidChangePoints(format!(
                    "sequence {s}: index {k} outside 1..={}",
                    own.len()
                )));
            }
            let label = own[k - 1];
            let pos = union_grid
                .binary_search(&label)
                .expect("own labels are part of the union");
            entries.push(RegisteredCp {
                sequence_id: s,
                original_index: k,
                registered_index: pos + 1,
                time_label: label,
            });
        }
    }
    Ok(RegisteredCps { union_grid, entries })
}
