// SPDX-License-Identifier: MIT OR Apache-2.0

use rayon::prelude::*;

use crate::distrib::DistSeq;
use crate::error::{Error, Result};

// k-range processed per task; fixed so results do not depend on thread count.
const CHUNK: usize = 256;

// Quantities below this multiple of (value scale)² are round-off.
const ROUNDOFF: f64 = 1e-24;
// Local variances below this multiple of the sequence-wide variance are floored.
const VARIANCE_FLOOR: f64 = 1e-12;

/// Per-index window statistics for `k ∈ [G, n − G]` (1-based), stored from
/// `k = G` upward.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowStats {
    pub bandwidth: usize,
    pub n: usize,
    /// Fréchet variance of elements `k−G+1..=k` about their own mean.
    pub v_left: Vec<f64>,
    /// Fréchet variance of elements `k+1..=k+G` about their own mean.
    pub v_right: Vec<f64>,
    /// Left window measured about the right window's mean.
    pub v_left_c: Vec<f64>,
    /// Right window measured about the left window's mean.
    pub v_right_c: Vec<f64>,
    /// Pooled fourth-minus-squared-second moment estimate of the AVFV.
    pub sigma2_hat: Vec<f64>,
    /// Fréchet variance of the whole sequence (sets the variance floor).
    pub total_variance: f64,
    /// Largest absolute quantile value (sets the round-off level).
    pub value_scale: f64,
}

impl WindowStats {
    pub fn len(&self) -> usize {
        self.v_left.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v_left.is_empty()
    }

    /// 1-based index `k` of entry `j`.
    pub fn index_of(&self, j: usize) -> usize {
        self.bandwidth + j
    }

    pub(crate) fn normalizer(&self) -> Normalizer {
        Normalizer::new(self.total_variance, self.value_scale)
    }
}

/// Turns `(numerator, σ², weight²)` into `sqrt(weight²/σ²)·numerator` with the
/// 0/0 convention and the variance floor.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Normalizer {
    floor: f64,
    roundoff: f64,
}

impl Normalizer {
    pub(crate) fn new(total_variance: f64, value_scale: f64) -> Self {
        let roundoff = ROUNDOFF * value_scale * value_scale;
        Self {
            floor: (VARIANCE_FLOOR * total_variance).max(roundoff),
            roundoff,
        }
    }

    /// Returns the statistic and whether the floor was applied.
    pub(crate) fn apply(&self, numerator: f64, sigma2: f64, weight2: f64) -> (f64, bool) {
        if sigma2 < self.floor {
            if numerator <= self.roundoff {
                return (0.0, false);
            }
            return ((weight2 / self.floor).sqrt() * numerator, true);
        }
        ((weight2 / sigma2).sqrt() * numerator, false)
    }
}

pub(crate) fn check_length(n: usize, bandwidth: usize) -> Result<()> {
    if bandwidth == 0 {
        return Err(Error::param("bandwidth must be at least 1"));
    }
    if n < 2 * bandwidth {
        return Err(Error::SequenceTooShort {
            n,
            bandwidth,
            required: 2 * bandwidth,
        });
    }
    Ok(())
}

/// Pointwise mean of a window maintained by the O(M) update
/// `mean += (added − dropped) / G`.
#[derive(Clone, Debug)]
pub(crate) struct RunningMean {
    mean: Vec<f64>,
    inv_g: f64,
}

impl RunningMean {
    pub(crate) fn direct(seq: &DistSeq, start: usize, len: usize) -> Self {
        let mut mean = vec![0.0; seq.grid().len()];
        for i in start..start + len {
            for (a, v) in mean.iter_mut().zip(seq.row(i)) {
                *a += v;
            }
        }
        let inv_g = 1.0 / len as f64;
        mean.iter_mut().for_each(|a| *a *= inv_g);
        Self { mean, inv_g }
    }

    #[inline]
    pub(crate) fn advance(&mut self, seq: &DistSeq, dropped: usize, added: usize) {
        let (d, a) = (seq.row(dropped), seq.row(added));
        for ((m, x), y) in self.mean.iter_mut().zip(a).zip(d) {
            *m += (x - y) * self.inv_g;
        }
    }

    pub(crate) fn values(&self) -> &[f64] {
        &self.mean
    }
}

/// Left and right window means for every `k ∈ [G, n − G]` from one recursive
/// pass; entry `j` belongs to `k = G + j`.
#[derive(Clone, Debug)]
pub struct SlidingMeans {
    pub bandwidth: usize,
    pub left: Vec<Vec<f64>>,
    pub right: Vec<Vec<f64>>,
}

pub fn sliding_means(seq: &DistSeq, bandwidth: usize) -> Result<SlidingMeans> {
    let n = seq.len();
    check_length(n, bandwidth)?;
    let g = bandwidth;
    let mut left = RunningMean::direct(seq, 0, g);
    let mut right = RunningMean::direct(seq, g, g);
    let count = n - 2 * g + 1;
    let mut out = SlidingMeans {
        bandwidth,
        left: Vec::with_capacity(count),
        right: Vec::with_capacity(count),
    };
    for k in g..=n - g {
        if k > g {
            // k-1 -> k: left gains row k-1 and loses row k-1-G; right gains row k-1+G and loses row k-1
            left.advance(seq, k - 1 - g, k - 1);
            right.advance(seq, k - 1, k - 1 + g);
        }
        out.left.push(left.values().to_vec());
        out.right.push(right.values().to_vec());
    }
    Ok(out)
}

/// Second and fourth moments of distances from `rows` to `center`:
/// returns `(V, σ²)` with `V = mean d²` and `σ² = mean d⁴ − V²`.
#[inline]
pub(crate) fn window_moments(
    seq: &DistSeq,
    rows: std::ops::Range<usize>,
    center: &[f64],
) -> (f64, f64) {
    let grid = seq.grid();
    let len = rows.len() as f64;
    let (mut s2, mut s4) = (0.0, 0.0);
    for i in rows {
        let d2 = grid.sq_distance(seq.row(i), center);
        s2 += d2;
        s4 += d2 * d2;
    }
    let v = s2 / len;
    (v, (s4 / len - v * v).max(0.0))
}

pub fn sliding_stats(seq: &DistSeq, bandwidth: usize) -> Result<WindowStats> {
    let n = seq.len();
    check_length(n, bandwidth)?;
    let g = bandwidth;
    let count = n - 2 * g + 1;
    let grid = seq.grid();

    let chunks: Vec<usize> = (0..count).step_by(CHUNK).collect();
    let pieces: Vec<Vec<[f64; 5]>> = chunks
        .par_iter()
        .map(|&j0| {
            let j1 = (j0 + CHUNK).min(count);
            let k0 = g + j0;
            let mut left = RunningMean::direct(seq, k0 - g, g);
            let mut right = RunningMean::direct(seq, k0, g);
            let mut out = Vec::with_capacity(j1 - j0);
            for k in k0..g + j1 {
                if k > k0 {
                    left.advance(seq, k - 1 - g, k - 1);
                    right.advance(seq, k - 1, k - 1 + g);
                }
                let (v_l, s_l) = window_moments(seq, k - g..k, left.values());
                let (v_r, s_r) = window_moments(seq, k..k + g, right.values());
                // sum of deviations about a window's own mean vanishes, so
                // measuring it about the other mean adds exactly d²(μ_L, μ_R)
                let cross = grid.sq_distance(left.values(), right.values());
                out.push([v_l, v_r, v_l + cross, v_r + cross, 0.5 * (s_l + s_r)]);
            }
            out
        })
        .collect();

    let mut stats = WindowStats {
        bandwidth,
        n,
        v_left: Vec::with_capacity(count),
        v_right: Vec::with_capacity(count),
        v_left_c: Vec::with_capacity(count),
        v_right_c: Vec::with_capacity(count),
        sigma2_hat: Vec::with_capacity(count),
        total_variance: seq.total_variance(),
        value_scale: seq.value_scale(),
    };
    for [v_l, v_r, c_l, c_r, s] in pieces.into_iter().flatten() {
        stats.v_left.push(v_l);
        stats.v_right.push(v_r);
        stats.v_left_c.push(c_l);
        stats.v_right_c.push(c_r);
        stats.sigma2_hat.push(s);
    }
    Ok(stats)
}

/// The scan statistic `T(k)` for every `k ∈ [G, n − G]`, together with the
/// indices at which the variance floor was applied.
pub fn scan_statistic_flagged(stats: &WindowStats) -> (Vec<f64>, Vec<usize>) {
    let norm = stats.normalizer();
    let weight2 = 0.5 * stats.bandwidth as f64;
    let mut degenerate = Vec::new();
    let values = (0..stats.len())
        .map(|j| {
            let variance_term = (stats.v_right[j] - stats.v_left[j]).abs();
            let mean_term = (stats.v_right_c[j] - stats.v_right[j] + stats.v_left_c[j]
                - stats.v_left[j])
                .abs();
            let (t, floored) = norm.apply(variance_term + mean_term, stats.sigma2_hat[j], weight2);
            if floored {
                degenerate.push(stats.index_of(j));
            }
            t
        })
        .collect();
    (values, degenerate)
}

pub fn scan_statistic(stats: &WindowStats) -> Vec<f64> {
    scan_statistic_flagged(stats).0
}

/// Boundary extension values: `left` holds `(k, T_Left(k))` for
/// `⌈2cG⌉ ≤ k < G`, `right` holds `(k, T_Right(k))` for
/// `n − G < k ≤ n − ⌈2cG⌉`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BoundaryValues {
    pub left: Vec<(usize, f64)>,
    pub right: Vec<(usize, f64)>,
    pub degenerate: Vec<usize>,
}

fn split_statistic(
    seq: &DistSeq,
    span: std::ops::Range<usize>,
    split: usize,
    norm: &Normalizer,
) -> (f64, bool) {
    let a = RunningMean::direct(seq, span.start, split - span.start);
    let b = RunningMean::direct(seq, split, span.end - split);
    let (v_a, s_a) = window_moments(seq, span.start..split, a.values());
    let (v_b, s_b) = window_moments(seq, split..span.end, b.values());
    let cross = seq.grid().sq_distance(a.values(), b.values());
    let numerator = (v_a - v_b).abs() + 2.0 * cross;
    let len_a = (split - span.start) as f64;
    let len_b = (span.end - split) as f64;
    let weight2 = len_a * len_b / span.len() as f64;
    norm.apply(numerator, 0.5 * (s_a + s_b), weight2)
}

fn boundary_normalizer(seq: &DistSeq) -> Normalizer {
    Normalizer::new(seq.total_variance(), seq.value_scale())
}

/// CUSUM-type statistic on the first `2G` elements split after element `k`
/// (`1 ≤ k ≤ G`); at `k = G` it equals the scan statistic `T(G)`.
pub fn left_boundary_statistic(seq: &DistSeq, bandwidth: usize, k: usize) -> Result<f64> {
    check_length(seq.len(), bandwidth)?;
    if k == 0 || k > bandwidth {
        return Err(Error::param(format!(
            "left boundary split {k} outside 1..={bandwidth}"
        )));
    }
    Ok(split_statistic(seq, 0..2 * bandwidth, k, &boundary_normalizer(seq)).0)
}

/// Mirror of [`left_boundary_statistic`] on the last `2G` elements
/// (`n − G ≤ k ≤ n − 1`).
pub fn right_boundary_statistic(seq: &DistSeq, bandwidth: usize, k: usize) -> Result<f64> {
    let n = seq.len();
    check_length(n, bandwidth)?;
    if k < n - bandwidth || k >= n {
        return Err(Error::param(format!(
            "right boundary split {k} outside {}..={}",
            n - bandwidth,
            n - 1
        )));
    }
    Ok(split_statistic(seq, n - 2 * bandwidth..n, k, &boundary_normalizer(seq)).0)
}

/// First split evaluated at either boundary, `max(1, ⌈2cG⌉)`.
pub(crate) fn boundary_offset(bandwidth: usize, c: f64) -> usize {
    ((2.0 * c * bandwidth as f64).ceil() as usize).max(1)
}

pub fn boundary_extension(seq: &DistSeq, bandwidth: usize, c: f64) -> Result<BoundaryValues> {
    let n = seq.len();
    check_length(n, bandwidth)?;
    if !(0.0..0.5).contains(&c) {
        return Err(Error::param(format!("boundary c must lie in [0, 0.5), got {c}")));
    }
    let norm = boundary_normalizer(seq);
    let g = bandwidth;
    let offset = boundary_offset(g, c);
    let mut out = BoundaryValues::default();
    for k in offset..g {
        let (t, floored) = split_statistic(seq, 0..2 * g, k, &norm);
        out.left.push((k, t));
        if floored {
            out.degenerate.push(k);
        }
    }
    if n >= offset {
        for k in n - g + 1..=n - offset {
            let (t, floored) = split_statistic(seq, n - 2 * g..n, k, &norm);
            out.right.push((k, t));
            if floored {
                out.degenerate.push(k);
            }
        }
    }
    Ok(out)
}
