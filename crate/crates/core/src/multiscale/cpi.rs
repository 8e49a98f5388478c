// SPDX-License-Identifier: MIT OR Apache-2.0

use rayon::prelude::*;

use crate::distrib::DistSeq;
use crate::error::{Error, Result};
use crate::mosum::{detect, DetectConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
enum Mark {
    None,
    Free,
    Frozen,
}

/// Bandwidth × index detection marks, each free or frozen (assigned to a
/// trajectory). Rows follow `g_grid`; indices are 1-based.
#[derive(Clone, Debug, PartialEq)]
pub struct CpiMatrix {
    g_grid: Vec<usize>,
    n: usize,
    state: Vec<Mark>,
}

impl CpiMatrix {
    pub fn new(g_grid: Vec<usize>, n: usize) -> Result<Self> {
        validate_grid(&g_grid)?;
        let state = vec![Mark::None; g_grid.len() * n];
        Ok(Self { g_grid, n, state })
    }

    /// Builds a matrix from `(row, index)` marks, all free.
    pub fn from_marks(g_grid: Vec<usize>, n: usize, marks: &[(usize, usize)]) -> Result<Self> {
        let mut cpi = Self::new(g_grid, n)?;
        for &(l, i) in marks {
            if l >= cpi.rows() || i == 0 || i > n {
                return Err(Error::param(format!("mark ({l}, {i}) outside the matrix")));
            }
            cpi.state[l * n + i - 1] = Mark::Free;
        }
        Ok(cpi)
    }

    pub fn g_grid(&self) -> &[usize] {
        &self.g_grid
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rows(&self) -> usize {
        self.g_grid.len()
    }

    pub fn row_of(&self, bandwidth: usize) -> Option<usize> {
        self.g_grid.binary_search(&bandwidth).ok()
    }

    fn at(&self, l: usize, i: usize) -> Mark {
        self.state[l * self.n + i - 1]
    }

    fn set(&mut self, l: usize, i: usize, m: Mark) {
        self.state[l * self.n + i - 1] = m;
    }

    pub fn is_marked(&self, l: usize, i: usize) -> bool {
        self.at(l, i) != Mark::None
    }

    pub fn is_free(&self, l: usize, i: usize) -> bool {
        self.at(l, i) == Mark::Free
    }

    pub fn is_frozen(&self, l: usize, i: usize) -> bool {
        self.at(l, i) == Mark::Frozen
    }

    pub(crate) fn freeze(&mut self, l: usize, i: usize) {
        debug_assert_eq!(self.at(l, i), Mark::Free);
        self.set(l, i, Mark::Frozen);
    }

    pub(crate) fn release(&mut self, l: usize, i: usize) {
        debug_assert_eq!(self.at(l, i), Mark::Frozen);
        self.set(l, i, Mark::Free);
    }

    /// All marks as `(row, index)`, row-major.
    pub fn marks(&self) -> Vec<(usize, usize)> {
        (0..self.rows())
            .flat_map(|l| self.row_marks(l).map(move |i| (l, i)))
            .collect()
    }

    fn row_marks(&self, l: usize) -> impl Iterator<Item = usize> + '_ {
        let row = &self.state[l * self.n..(l + 1) * self.n];
        row.iter()
            .enumerate()
            .filter(|(_, m)| **m != Mark::None)
            .map(|(i, _)| i + 1)
    }

    pub fn free_count(&self, l: usize) -> usize {
        self.state[l * self.n..(l + 1) * self.n]
            .iter()
            .filter(|m| **m == Mark::Free)
            .count()
    }

    pub fn any_free(&self) -> bool {
        self.state.contains(&Mark::Free)
    }

    pub fn mark_count(&self) -> usize {
        self.state.iter().filter(|m| **m != Mark::None).count()
    }
}

pub(crate) fn validate_grid(g_grid: &[usize]) -> Result<()> {
    if g_grid.len() < 2 {
        return Err(Error::param("bandwidth grid needs at least two values"));
    }
    if g_grid[0] == 0 {
        return Err(Error::param("bandwidths must be positive"));
    }
    if g_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("bandwidth grid must be strictly increasing"));
    }
    Ok(())
}

/// Runs single-bandwidth detection at every grid bandwidth (in parallel) and
/// marks the estimates.
pub fn build_cpi(seq: &DistSeq, g_grid: &[usize], template: &DetectConfig) -> Result<CpiMatrix> {
    validate_grid(g_grid)?;
    let detections = g_grid
        .par_iter()
        .map(|&g| {
            let config = DetectConfig {
                bandwidth: g,
                ..template.clone()
            };
            detect(seq, &config).map(|(cps, _)| cps.indices())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut cpi = CpiMatrix::new(g_grid.to_vec(), seq.len())?;
    for (l, indices) in detections.iter().enumerate() {
        for &i in indices {
            cpi.set(l, i, Mark::Free);
        }
    }
    Ok(cpi)
}

/// Type-7 percentile of the bandwidth grid.
pub fn grid_percentile(g_grid: &[usize], p: f64) -> f64 {
    let h = (g_grid.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    if lo + 1 >= g_grid.len() {
        return g_grid[g_grid.len() - 1] as f64;
    }
    g_grid[lo] as f64 + (h - lo as f64) * (g_grid[lo + 1] - g_grid[lo]) as f64
}

/// Free marks of the lowest row with the most free marks among rows whose
/// bandwidth lies in `[low, up]`, as `(index, bandwidth)`.
pub fn select_seeds(cpi: &CpiMatrix, (low, up): (f64, f64)) -> Vec<(usize, usize)> {
    let mut best: Option<(usize, usize)> = None;
    for (l, &g) in cpi.g_grid.iter().enumerate() {
        if (g as f64) < low || (g as f64) > up {
            continue;
        }
        let w = cpi.free_count(l);
        if w > 0 && best.is_none_or(|(_, bw)| w > bw) {
            best = Some((l, w));
        }
    }
    let Some((l, _)) = best else {
        return Vec::new();
    };
    let g = cpi.g_grid[l];
    (1..=cpi.n).filter(|&i| cpi.is_free(l, i)).map(|i| (i, g)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BandMode {
    /// Every bandwidth row.
    Full,
    /// Rows at or above the reference bandwidth.
    UpperHalf,
}

/// Freezes and returns every free mark with `|i' − i| ≤ half_band` in the
/// rows selected by `mode`, as `(index, bandwidth)` in row-major order.
pub fn band_search(
    cpi: &mut CpiMatrix,
    (i, g_ref): (usize, usize),
    half_band: f64,
    mode: BandMode,
) -> Vec<(usize, usize)> {
    let reach = half_band.max(0.0).floor() as usize;
    let lo = i.saturating_sub(reach).max(1);
    let hi = (i + reach).min(cpi.n);
    let first_row = match mode {
        BandMode::Full => 0,
        BandMode::UpperHalf => cpi.g_grid.partition_point(|&g| g < g_ref),
    };
    let mut found = Vec::new();
    for l in first_row..cpi.rows() {
        for j in lo..=hi {
            if cpi.is_free(l, j) {
                cpi.freeze(l, j);
                found.push((j, cpi.g_grid[l]));
            }
        }
    }
    found
}
