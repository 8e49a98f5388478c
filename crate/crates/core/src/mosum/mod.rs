// SPDX-License-Identifier: MIT OR Apache-2.0

//! Single-bandwidth Fréchet-MOSUM detection.

mod scalar;
mod stats;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::distrib::DistSeq;
use crate::error::{Error, Result};

pub use scalar::{scalar_mosum_detect, scalar_mosum_profile};
pub use stats::{
    boundary_extension, left_boundary_statistic, right_boundary_statistic, scan_statistic,
    scan_statistic_flagged, sliding_means, sliding_stats, BoundaryValues, SlidingMeans,
    WindowStats,
};
pub(crate) use stats::{check_length, Normalizer};

pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_MIN_BLOCK_LEN: usize = 15;
pub const DEFAULT_BOUNDARY_C: f64 = 0.1;

// Below this n/G ratio the asymptotic threshold is unreliable.
const SHORT_RATIO_WARNING: f64 = 8.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectConfig {
    /// Bandwidth `G`: number of elements on each side of the split.
    #[serde(rename = "G")]
    pub bandwidth: usize,
    pub alpha: f64,
    /// `L_m`, which sets `ε = min(0.5, L_m / G)`.
    pub min_block_len: usize,
    pub boundary_c: f64,
    pub boundary_correction: bool,
}

impl DetectConfig {
    pub fn new(bandwidth: usize) -> Self {
        Self {
            bandwidth,
            alpha: DEFAULT_ALPHA,
            min_block_len: DEFAULT_MIN_BLOCK_LEN,
            boundary_c: DEFAULT_BOUNDARY_C,
            boundary_correction: true,
        }
    }

    pub fn alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn min_block_len(mut self, min_block_len: usize) -> Self {
        self.min_block_len = min_block_len;
        self
    }

    pub fn boundary_c(mut self, c: f64) -> Self {
        self.boundary_c = c;
        self
    }

    pub fn boundary_correction(mut self, on: bool) -> Self {
        self.boundary_correction = on;
        self
    }

    pub fn epsilon(&self) -> f64 {
        epsilon(self.min_block_len, self.bandwidth)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bandwidth == 0 {
            return Err(Error::param("bandwidth must be at least 1"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::param(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.min_block_len == 0 {
            return Err(Error::param("minimum block length must be at least 1"));
        }
        if !(0.0..0.5).contains(&self.boundary_c) {
            return Err(Error::param(format!(
                "boundary c must lie in [0, 0.5), got {}",
                self.boundary_c
            )));
        }
        Ok(())
    }
}

/// `ε = min(0.5, L_m / G)`.
pub fn epsilon(min_block_len: usize, bandwidth: usize) -> f64 {
    (min_block_len as f64 / bandwidth as f64).min(0.5)
}

fn gamma1(x: f64) -> f64 {
    (2.0 * x.ln()).sqrt()
}

fn gamma2(x: f64) -> f64 {
    2.0 * x.ln() + 0.5 * x.ln().ln() + 1.5f64.ln() - 0.5 * PI.ln()
}

/// Asymptotic level-`α` threshold for `max_k T(k)` with `x = n / G`.
pub fn critical_value(n: usize, bandwidth: usize, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::param(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if bandwidth == 0 {
        return Err(Error::param("bandwidth must be at least 1"));
    }
    let x = n as f64 / bandwidth as f64;
    if x <= std::f64::consts::E {
        return Err(Error::RatioTooSmall { ratio: x });
    }
    let a = -(1.0 / (1.0 - alpha).sqrt()).ln().ln();
    Ok((a + gamma2(x)) / gamma1(x))
}

/// Scan values `T(k)` for `k = 1..=n` (entry `k − 1`); positions outside
/// `first..=last` carry 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanProfile {
    pub n: usize,
    #[serde(rename = "G")]
    pub bandwidth: usize,
    pub threshold: f64,
    pub values: Vec<f64>,
    pub first: usize,
    pub last: usize,
    /// Indices where the variance floor replaced a vanishing `σ̂²`.
    pub degenerate: Vec<usize>,
}

impl ScanProfile {
    pub fn value(&self, k: usize) -> f64 {
        self.values[k - 1]
    }

    pub fn is_defined(&self, k: usize) -> bool {
        (self.first..=self.last).contains(&k)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChangePoint {
    pub index: usize,
    pub block_start: usize,
    pub block_end: usize,
    /// Statistic at the estimate, or another strength measure when the point
    /// did not come from a scan profile.
    pub peak: f64,
}

impl ChangePoint {
    pub fn at(index: usize) -> Self {
        Self {
            index,
            block_start: index,
            block_end: index,
            peak: 0.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChangePointSet {
    points: Vec<ChangePoint>,
}

impl ChangePointSet {
    pub fn new(points: Vec<ChangePoint>) -> Result<Self> {
        for p in &points {
            if !(p.block_start <= p.index && p.index <= p.block_end) {
                return Err(Error::InvalidChangePoints(format!(
                    "estimate {} outside its block [{}, {}]",
                    p.index, p.block_start, p.block_end
                )));
            }
        }
        if points.windows(2).any(|w| w[1].index <= w[0].index) {
            return Err(Error::InvalidChangePoints(
                "estimates must be strictly increasing".into(),
            ));
        }
        Ok(Self { points })
    }

    pub fn from_indices(indices: &[usize]) -> Result<Self> {
        Self::new(indices.iter().map(|&k| ChangePoint::at(k)).collect())
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn points(&self) -> &[ChangePoint] {
        &self.points
    }

    pub fn indices(&self) -> Vec<usize> {
        self.points.iter().map(|p| p.index).collect()
    }

    pub fn q_hat(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ChangePoint> {
        self.points.iter()
    }
}

/// Maximal over-threshold runs with sub-threshold (or absent) flanks and
/// `e − s ≥ εG`, each reduced to its first argmax.
pub fn pick_blocks(profile: &ScanProfile, epsilon: f64) -> ChangePointSet {
    let min_len = epsilon * profile.bandwidth as f64;
    let above = |k: usize| profile.is_defined(k) && profile.value(k) >= profile.threshold;
    let mut points = Vec::new();
    let mut k = 1;
    while k <= profile.n {
        if !above(k) {
            k += 1;
            continue;
        }
        let s = k;
        while k < profile.n && above(k + 1) {
            k += 1;
        }
        let e = k;
        if (e - s) as f64 >= min_len {
            let mut best = s;
            for j in s + 1..=e {
                if profile.value(j) > profile.value(best) {
                    best = j;
                }
            }
            points.push(ChangePoint {
                index: best,
                block_start: s,
                block_end: e,
                peak: profile.value(best),
            });
        }
        k = e + 1;
    }
    ChangePointSet { points }
}

/// Scan profile over `1..=n`, with the boundary extension when enabled.
pub fn scan_profile(seq: &DistSeq, config: &DetectConfig) -> Result<ScanProfile> {
    config.validate()?;
    let n = seq.len();
    let g = config.bandwidth;
    check_length(n, g)?;
    let threshold = critical_value(n, g, config.alpha)?;
    if (n as f64) < SHORT_RATIO_WARNING * g as f64 {
        log::warn!("n/G = {:.2} is small; the asymptotic threshold may be inaccurate", n as f64 / g as f64);
    }

    let stats = sliding_stats(seq, g)?;
    let (interior, mut degenerate) = scan_statistic_flagged(&stats);
    let mut values = vec![0.0; n];
    values[g - 1..n - g].copy_from_slice(&interior);
    let (mut first, mut last) = (g, n - g);

    if config.boundary_correction {
        let b = boundary_extension(seq, g, config.boundary_c)?;
        for &(k, t) in b.left.iter().chain(&b.right) {
            values[k - 1] = t;
        }
        if let Some(&(k, _)) = b.left.first() {
            first = k;
        }
        if let Some(&(k, _)) = b.right.last() {
            last = k;
        }
        degenerate.extend(b.degenerate);
        degenerate.sort_unstable();
    }
    if !degenerate.is_empty() {
        log::debug!("variance floor applied at {} indices", degenerate.len());
    }
    Ok(ScanProfile {
        n,
        bandwidth: g,
        threshold,
        values,
        first,
        last,
        degenerate,
    })
}

pub fn detect(seq: &DistSeq, config: &DetectConfig) -> Result<(ChangePointSet, ScanProfile)> {
    let profile = scan_profile(seq, config)?;
    let cps = pick_blocks(&profile, config.epsilon());
    Ok((cps, profile))
}

/// JSON report with a fixed field order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub n: usize,
    #[serde(rename = "G")]
    pub bandwidth: usize,
    pub alpha: f64,
    pub epsilon: f64,
    pub threshold: f64,
    pub profile: Vec<f64>,
    pub change_points: ChangePointSet,
}

impl DetectionReport {
    pub fn new(config: &DetectConfig, cps: &ChangePointSet, profile: &ScanProfile) -> Self {
        Self {
            n: profile.n,
            bandwidth: profile.bandwidth,
            alpha: config.alpha,
            epsilon: config.epsilon(),
            threshold: profile.threshold,
            profile: profile.values.clone(),
            change_points: cps.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distrib::{ProbGrid, QuantileFunction};
    use proptest::prelude::*;

    fn synthetic(values: Vec<f64>, threshold: f64, bandwidth: usize) -> ScanProfile {
        let n = values.len();
        ScanProfile {
            n,
            bandwidth,
            threshold,
            values,
            first: 1,
            last: n,
            degenerate: vec![],
        }
    }

    #[test]
    fn gamma1_at_e() {
        assert!((gamma1(std::f64::consts::E) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn critical_value_reference() {
        // independent evaluation: x = 10, log x = 2.302585093, log log x = 0.834032445,
        // -log log(1/sqrt(0.95)) = 3.661709...
        let lx = 10f64.ln();
        let a = -(-(0.95f64.ln()) / 2.0).ln();
        let expected = (a + 2.0 * lx + 0.5 * lx.ln() + 1.5f64.ln() - 0.5 * PI.ln()) / (2.0 * lx).sqrt();
        let d = critical_value(800, 80, 0.05).unwrap();
        assert!((d - expected).abs() < 1e-12);
        assert!((d - 3.969).abs() < 1e-3, "{d}");
    }

    #[test]
    fn critical_value_errors() {
        assert!(matches!(critical_value(20, 10, 0.05), Err(Error::RatioTooSmall { .. })));
        assert!(critical_value(27, 10, 0.05).is_err());
        assert!(critical_value(28, 10, 0.05).is_ok());
        assert!(critical_value(800, 80, 0.0).is_err());
        assert!(critical_value(800, 80, 1.0).is_err());
    }

    #[test]
    fn critical_value_monotone() {
        assert!(critical_value(800, 80, 0.01).unwrap() > critical_value(800, 80, 0.05).unwrap());
        let mut prev = 0.0;
        for n in (800..4000).step_by(100) {
            let d = critical_value(n, 80, 0.05).unwrap();
            assert!(d > prev);
            prev = d;
        }
    }

    #[test]
    fn below_threshold_gives_nothing() {
        let p = synthetic(vec![1.0; 300], 2.0, 75);
        assert!(pick_blocks(&p, 0.2).is_empty());
    }

    #[test]
    fn single_run_peak() {
        let mut v = vec![0.5; 300];
        for k in 100..=140 {
            v[k - 1] = 3.0 + (k as f64 * 0.37).sin().abs() * 0.1;
        }
        v[118 - 1] = 10.0;
        let cps = pick_blocks(&synthetic(v, 2.0, 75), 0.2);
        assert_eq!(cps.indices(), vec![118]);
        let p = &cps.points()[0];
        assert_eq!((p.block_start, p.block_end, p.peak), (100, 140, 10.0));
    }

    #[test]
    fn short_run_is_discarded() {
        let mut v = vec![0.0; 200];
        for x in &mut v[49..57] {
            *x = 5.0;
        }
        assert!(pick_blocks(&synthetic(v, 1.0, 75), 0.2).is_empty());
    }

    #[test]
    fn ties_take_smallest_index_and_runs_may_touch_ends() {
        let mut v = vec![3.0; 40];
        v[4] = 7.0;
        v[9] = 7.0;
        for x in &mut v[20..] {
            *x = 0.0;
        }
        let cps = pick_blocks(&synthetic(v, 1.0, 10), 0.5);
        assert_eq!(cps.indices(), vec![5]);
        assert_eq!(cps.points()[0].block_start, 1);
    }

    #[test]
    fn undefined_positions_break_runs() {
        let mut p = synthetic(vec![5.0; 50], 1.0, 10);
        p.first = 10;
        p.last = 40;
        let cps = pick_blocks(&p, 0.5);
        assert_eq!(cps.points()[0].block_start, 10);
        assert_eq!(cps.points()[0].block_end, 40);
    }

    #[test]
    fn identical_sequence_detects_nothing() {
        let grid = ProbGrid::uniform(51).unwrap();
        let q = QuantileFunction::new(grid.clone(), grid.points().to_vec()).unwrap();
        let seq = DistSeq::from_quantiles(&vec![q; 200]).unwrap();
        let (cps, profile) = detect(&seq, &DetectConfig::new(20)).unwrap();
        assert!(cps.is_empty());
        assert!(profile.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn config_validation() {
        assert!(DetectConfig::new(0).validate().is_err());
        assert!(DetectConfig::new(10).alpha(1.5).validate().is_err());
        assert!(DetectConfig::new(10).boundary_c(0.5).validate().is_err());
        assert!(DetectConfig::new(10).min_block_len(0).validate().is_err());
        assert_eq!(DetectConfig::new(80).min_block_len(16).epsilon(), 0.2);
        assert_eq!(DetectConfig::new(20).epsilon(), 0.5);
    }

    #[test]
    fn report_field_order() {
        let cps = ChangePointSet::new(vec![ChangePoint {
            index: 5,
            block_start: 3,
            block_end: 8,
            peak: 4.5,
        }])
        .unwrap();
        let profile = synthetic(vec![0.0; 10], 1.0, 2);
        let json = serde_json::to_string(&DetectionReport::new(&DetectConfig::new(2), &cps, &profile)).unwrap();
        let keys = ["\"n\"", "\"G\"", "\"alpha\"", "\"epsilon\"", "\"threshold\"", "\"profile\"", "\"change_points\""];
        let pos: Vec<usize> = keys.iter().map(|k| json.find(k).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        assert!(json.contains("{\"index\":5,\"block_start\":3,\"block_end\":8,\"peak\":4.5}"));
    }

    #[test]
    fn change_point_set_validation() {
        assert!(ChangePointSet::from_indices(&[3, 3]).is_err());
        assert!(ChangePointSet::from_indices(&[5, 3]).is_err());
        assert_eq!(ChangePointSet::from_indices(&[3, 9]).unwrap().q_hat(), 2);
    }

    proptest! {
        #[test]
        fn picked_blocks_satisfy_invariants(
            values in proptest::collection::vec(0.0f64..4.0, 20..200),
            threshold in 0.5f64..3.5,
            eps in 0.05f64..0.5,
        ) {
            let p = synthetic(values, threshold, 10);
            let cps = pick_blocks(&p, eps);
            let pts = cps.points();
            for w in pts.windows(2) {
                prop_assert!(w[0].block_end + 1 < w[1].block_start);
            }
            for c in pts {
                prop_assert!((c.block_end - c.block_start) as f64 >= eps * 10.0);
                prop_assert!(c.block_start == 1 || p.value(c.block_start - 1) < threshold);
                prop_assert!(c.block_end == p.n || p.value(c.block_end + 1) < threshold);
                for k in c.block_start..=c.block_end {
                    prop_assert!(p.value(k) >= threshold);
                    prop_assert!(p.value(k) <= c.peak);
                }
                for k in c.block_start..c.index {
                    prop_assert!(p.value(k) < c.peak);
                }
            }
        }

        #[test]
        fn critical_value_decreasing_in_alpha(a in 0.001f64..0.5, b in 0.001f64..0.5) {
            prop_assume!(a < b);
            prop_assert!(critical_value(1000, 50, a).unwrap() > critical_value(1000, 50, b).unwrap());
        }
    }
}
