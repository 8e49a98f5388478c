// SPDX-License-Identifier: MIT OR Apache-2.0

//! Distributional primitives.
//!
//! A one-dimensional distribution is represented by its quantile function
//! sampled on a shared [`ProbGrid`]. For such laws the order-2 Wasserstein
//! distance is the L² distance between quantile functions, the Fréchet mean
//! of a sample is the pointwise average of its quantile functions, and the
//! Fréchet variance is the mean squared distance to that average. All
//! integrals over `[0, 1]` use the trapezoidal rule on the grid.

mod estimate;
mod lqd;

use std::ops::Range;
use std::sync::Arc;

use crate::error::{Error, Result};

pub use estimate::{estimate_quantile, isotonic_regression, silverman_bandwidth, Strategy};
pub use lqd::{inverse_lqd, lqd_transform, LqdFunction};

/// Number of probability levels used when nothing else is requested.
pub const DEFAULT_GRID_SIZE: usize = 201;

#[derive(Debug)]
struct GridInner {
    points: Vec<f64>,
    weights: Vec<f64>,
}

/// Ordered probability levels `t_1 < ... < t_M` in `[0, 1]`, shared by every
/// quantile function of one analysis. Cloning is cheap.
#[derive(Clone, Debug)]
pub struct ProbGrid {
    inner: Arc<GridInner>,
}

impl PartialEq for ProbGrid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner) || self.inner.points == other.inner.points
    }
}

impl Default for ProbGrid {
    fn default() -> Self {
        Self::uniform(DEFAULT_GRID_SIZE).expect("default grid size is valid")
    }
}

impl ProbGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::InvalidGrid(format!(
                "need at least 3 levels, got {}",
                points.len()
            )));
        }
        for (i, &t) in points.iter().enumerate() {
            if !t.is_finite() || !(0.0..=1.0).contains(&t) {
                return Err(Error::InvalidGrid(format!(
                    "level {t} at position {i} lies outside [0, 1]"
                )));
            }
        }
        if let Some(i) = points.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid(format!(
                "levels must be strictly increasing (position {})",
                i + 1
            )));
        }
        let m = points.len();
        let mut weights = vec![0.0; m];
        for j in 0..m - 1 {
            let half = 0.5 * (points[j + 1] - points[j]);
            weights[j] += half;
            weights[j + 1] += half;
        }
        Ok(Self {
            inner: Arc::new(GridInner { points, weights }),
        })
    }

    /// `m` equally spaced levels `0, 1/(m-1), ..., 1`.
    pub fn uniform(m: usize) -> Result<Self> {
        if m < 3 {
            return Err(Error::InvalidGrid(format!(
                "need at least 3 levels, got {m}"
            )));
        }
        let last = (m - 1) as f64;
        let points = (0..m).map(|j| j as f64 / last).collect();
        Self::new(points)
    }

    pub fn points(&self) -> &[f64] {
        &self.inner.points
    }

    pub fn len(&self) -> usize {
        self.inner.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.points.is_empty()
    }

    /// Trapezoidal quadrature weights.
    pub fn weights(&self) -> &[f64] {
        &self.inner.weights
    }

    pub fn integrate(&self, f: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.len());
        self.inner.weights.iter().zip(f).map(|(w, v)| w * v).sum()
    }

    /// Squared L² distance of two value vectors on this grid.
    #[inline]
    pub fn sq_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), self.len());
        debug_assert_eq!(b.len(), self.len());
        self.inner
            .weights
            .iter()
            .zip(a.iter().zip(b))
            .map(|(w, (x, y))| {
                let d = x - y;
                w * d * d
            })
            .sum()
    }
}

/// A distribution given by its quantile function on a [`ProbGrid`].
#[derive(Clone, Debug, PartialEq)]
pub struct QuantileFunction {
    grid: ProbGrid,
    values: Vec<f64>,
}

impl QuantileFunction {
    /// Values must be finite and non-decreasing along the grid.
    pub fn new(grid: ProbGrid, values: Vec<f64>) -> Result<Self> {
        check_quantile_values(&grid, &values)?;
        Ok(Self { grid, values })
    }

    pub(crate) fn new_unchecked(grid: ProbGrid, values: Vec<f64>) -> Self {
        debug_assert!(check_quantile_values(&grid, &values).is_ok());
        Self { grid, values }
    }

    pub fn grid(&self) -> &ProbGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Location shift `t -> q(t) + c`.
    pub fn shifted(&self, c: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v + c).collect(),
        }
    }

    pub fn distance(&self, other: &Self) -> Result<f64> {
        wasserstein_distance(self, other)
    }
}

fn check_quantile_values(grid: &ProbGrid, values: &[f64]) -> Result<()> {
    if values.len() != grid.len() {
        return Err(Error::LengthMismatch {
            expected: grid.len(),
            got: values.len(),
        });
    }
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    if let Some(i) = values.windows(2).position(|w| w[1] < w[0]) {
        return Err(Error::NotMonotone {
            index: i + 1,
            prev: values[i],
            next: values[i + 1],
        });
    }
    Ok(())
}

/// Order-2 Wasserstein distance `sqrt(∫ (q1 - q2)² dt)`.
pub fn wasserstein_distance(q1: &QuantileFunction, q2: &QuantileFunction) -> Result<f64> {
    if q1.grid != q2.grid {
        return Err(Error::GridMismatch);
    }
    Ok(q1.grid.sq_distance(&q1.values, &q2.values).sqrt())
}

/// Pointwise mean of the window's quantile functions.
pub fn frechet_mean(window: &[QuantileFunction]) -> Result<QuantileFunction> {
    let first = window.first().ok_or(Error::EmptyWindow)?;
    let grid = first.grid.clone();
    let mut acc = vec![0.0; grid.len()];
    for q in window {
        if q.grid != grid {
            return Err(Error::GridMismatch);
        }
        for (a, v) in acc.iter_mut().zip(&q.values) {
            *a += v;
        }
    }
    let g = window.len() as f64;
    acc.iter_mut().for_each(|a| *a /= g);
    Ok(QuantileFunction::new_unchecked(grid, acc))
}

/// Mean squared Wasserstein distance of the window to `center`.
pub fn frechet_variance(window: &[QuantileFunction], center: &QuantileFunction) -> Result<f64> {
    if window.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let mut total = 0.0;
    for q in window {
        if q.grid != center.grid {
            return Err(Error::GridMismatch);
        }
        total += center.grid.sq_distance(&q.values, &center.values);
    }
    Ok(total / window.len() as f64)
}

/// An ordered sequence of quantile functions on one grid, stored row-major.
///
/// Positions are 0-based internally; change points follow the convention that
/// a change at `k` separates elements `1..=k` from `k+1..=n` (1-based), i.e.
/// rows `0..k` from rows `k..n`.
#[derive(Clone, Debug, PartialEq)]
pub struct DistSeq {
    grid: ProbGrid,
    data: Vec<f64>,
    len: usize,
    time_labels: Option<Vec<i64>>,
}

impl DistSeq {
    pub fn from_quantiles(elements: &[QuantileFunction]) -> Result<Self> {
        let first = elements.first().ok_or(Error::EmptyWindow)?;
        let grid = first.grid.clone();
        let mut data = Vec::with_capacity(elements.len() * grid.len());
        for q in elements {
            if q.grid != grid {
                return Err(Error::GridMismatch);
            }
            data.extend_from_slice(&q.values);
        }
        Ok(Self {
            grid,
            data,
            len: elements.len(),
            time_labels: None,
        })
    }

    /// Builds a sequence from a flat row-major matrix of `n * M` values,
    /// validating every row as a quantile function.
    pub fn from_matrix(grid: ProbGrid, data: Vec<f64>) -> Result<Self> {
        let m = grid.len();
        if data.is_empty() || !data.len().is_multiple_of(m) {
            return Err(Error::LengthMismatch {
                expected: m,
                got: data.len(),
            });
        }
        for row in data.chunks_exact(m) {
            check_quantile_values(&grid, row)?;
        }
        let len = data.len() / m;
        Ok(Self {
            grid,
            data,
            len,
            time_labels: None,
        })
    }

    pub fn with_time_labels(mut self, labels: Vec<i64>) -> Result<Self> {
        if labels.len() != self.len {
            return Err(Error::LengthMismatch {
                expected: self.len,
                got: labels.len(),
            });
        }
        if labels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::UnorderedTimeLabels);
        }
        self.time_labels = Some(labels);
        Ok(self)
    }

    pub fn grid(&self) -> &ProbGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn time_labels(&self) -> Option<&[i64]> {
        self.time_labels.as_deref()
    }

    /// Raw values of element `i` (0-based).
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.grid.len();
        &self.data[i * m..(i + 1) * m]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.grid.len())
    }

    pub fn matrix(&self) -> &[f64] {
        &self.data
    }

    pub fn quantile(&self, i: usize) -> QuantileFunction {
        QuantileFunction::new_unchecked(self.grid.clone(), self.row(i).to_vec())
    }

    pub fn to_quantiles(&self) -> Vec<QuantileFunction> {
        (0..self.len).map(|i| self.quantile(i)).collect()
    }

    /// Elements `range` as a new sequence (labels carried along).
    pub fn slice(&self, range: Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.len {
            return Err(Error::EmptyWindow);
        }
        let m = self.grid.len();
        Ok(Self {
            grid: self.grid.clone(),
            data: self.data[range.start * m..range.end * m].to_vec(),
            len: range.len(),
            time_labels: self.time_labels.as_ref().map(|l| l[range].to_vec()),
        })
    }

    /// Every quantile function shifted by `c`.
    pub fn shifted(&self, c: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            data: self.data.iter().map(|v| v + c).collect(),
            len: self.len,
            time_labels: self.time_labels.clone(),
        }
    }

    /// Fréchet mean of rows `range`.
    pub fn frechet_mean(&self, range: Range<usize>) -> Result<QuantileFunction> {
        if range.start >= range.end || range.end > self.len {
            return Err(Error::EmptyWindow);
        }
        let mut acc = vec![0.0; self.grid.len()];
        for i in range.clone() {
            for (a, v) in acc.iter_mut().zip(self.row(i)) {
                *a += v;
            }
        }
        let g = range.len() as f64;
        acc.iter_mut().for_each(|a| *a /= g);
        Ok(QuantileFunction::new_unchecked(self.grid.clone(), acc))
    }

    /// Fréchet variance of rows `range` about `center`.
    pub fn frechet_variance(&self, range: Range<usize>, center: &QuantileFunction) -> Result<f64> {
        if range.start >= range.end || range.end > self.len {
            return Err(Error::EmptyWindow);
        }
        if center.grid != self.grid {
            return Err(Error::GridMismatch);
        }
        let total: f64 = range
            .clone()
            .map(|i| self.grid.sq_distance(self.row(i), &center.values))
            .sum();
        Ok(total / range.len() as f64)
    }

    /// Fréchet variance of the whole sequence about its own mean.
    pub fn total_variance(&self) -> f64 {
        let mean = self
            .frechet_mean(0..self.len)
            .expect("sequence is non-empty");
        self.frechet_variance(0..self.len, &mean)
            .expect("grid is shared")
    }

    /// Largest absolute quantile value; sets the scale of round-off.
    pub(crate) fn value_scale(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}
