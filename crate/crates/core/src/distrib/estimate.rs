// SPDX-License-Identifier: MIT OR Apache-2.0

use std::f64::consts::PI;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{ProbGrid, QuantileFunction};
use crate::error::{Error, Result};

/// How a quantile function is estimated from raw samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Strategy {
    /// Invert the CDF of a Gaussian kernel density estimate.
    Kse,
    /// Empirical quantiles with linear interpolation between order statistics.
    Sqi,
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kse" => Ok(Strategy::Kse),
            "sqi" => Ok(Strategy::Sqi),
            other => Err(Error::param(format!(
                "unknown estimation strategy '{other}' (expected KSE or SQI)"
            ))),
        }
    }
}

// Points on which the kernel density is tabulated before integration.
const KDE_POINTS: usize = 2048;
// Support padding, in bandwidths, on both sides of the sample range.
const KDE_PAD: f64 = 5.0;
// Violations beyond this fraction of the value range are reported, not repaired.
const MONOTONE_REPAIR_LIMIT: f64 = 0.01;

pub fn estimate_quantile(
    samples: &[f64],
    grid: &ProbGrid,
    strategy: Strategy,
    kde_bandwidth: Option<f64>,
) -> Result<QuantileFunction> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    if let Some(index) = samples.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);

    let values = match strategy {
        Strategy::Sqi => grid
            .points()
            .iter()
            .map(|&t| type7_quantile(&sorted, t))
            .collect(),
        Strategy::Kse => {
            let h = match kde_bandwidth {
                Some(h) if h.is_finite() && h > 0.0 => h,
                Some(h) => return Err(Error::param(format!("KDE bandwidth must be > 0, got {h}"))),
                None => silverman_bandwidth(&sorted).ok_or(Error::DegenerateSamples)?,
            };
            let mut values = kde_quantiles(&sorted, h, grid.points());
            repair_monotone(&mut values)?;
            values
        }
    };
    QuantileFunction::new(grid.clone(), values)
}

fn type7_quantile(sorted: &[f64], t: f64) -> f64 {
    let n = sorted.len();
    let h = (n - 1) as f64 * t;
    let lo = h.floor() as usize;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

/// Silverman's rule `0.9 · min(sd, IQR/1.34) · n^(-1/5)`; `None` when every
/// sample is identical. Expects sorted input.
pub fn silverman_bandwidth(sorted: &[f64]) -> Option<f64> {
    let n = sorted.len();
    if n < 2 || sorted[0] == sorted[n - 1] {
        return None;
    }
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let var = sorted.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    let iqr = type7_quantile(sorted, 0.75) - type7_quantile(sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * (n as f64).powf(-0.2);
    (h > 0.0 && h.is_finite()).then_some(h)
}

fn kde_quantiles(sorted: &[f64], h: f64, levels: &[f64]) -> Vec<f64> {
    let lo = sorted[0] - KDE_PAD * h;
    let hi = sorted[sorted.len() - 1] + KDE_PAD * h;
    let dx = (hi - lo) / (KDE_POINTS - 1) as f64;
    let xs: Vec<f64> = (0..KDE_POINTS).map(|j| lo + j as f64 * dx).collect();

    let norm = 1.0 / ((2.0 * PI).sqrt() * h * sorted.len() as f64);
    let reach = (KDE_PAD + 3.0) * h;
    let density: Vec<f64> = xs
        .iter()
        .map(|&x| {
            let a = sorted.partition_point(|&s| s < x - reach);
            let b = sorted.partition_point(|&s| s <= x + reach);
            sorted[a..b]
                .iter()
                .map(|&s| {
                    let z = (x - s) / h;
                    (-0.5 * z * z).exp()
                })
                .sum::<f64>()
                * norm
        })
        .collect();

    let mut cdf = vec![0.0; KDE_POINTS];
    for j in 1..KDE_POINTS {
        cdf[j] = cdf[j - 1] + 0.5 * dx * (density[j - 1] + density[j]);
    }
    let total = cdf[KDE_POINTS - 1];
    cdf.iter_mut().for_each(|c| *c /= total);

    levels
        .iter()
        .map(|&t| {
            if t <= 0.0 {
                return lo;
            }
            if t >= 1.0 {
                return hi;
            }
            let j = cdf.partition_point(|&c| c < t).clamp(1, KDE_POINTS - 1);
            let (c0, c1) = (cdf[j - 1], cdf[j]);
            if c1 > c0 {
                xs[j - 1] + dx * (t - c0) / (c1 - c0)
            } else {
                xs[j]
            }
        })
        .collect()
}

/// Pool-adjacent-violators least-squares projection onto non-decreasing
/// sequences (unit weights).
pub fn isotonic_regression(values: &[f64]) -> Vec<f64> {
    // blocks of (sum, count)
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (s1, c1) = blocks[blocks.len() - 1];
            let (s0, c0) = blocks[blocks.len() - 2];
            if s0 / c0 as f64 <= s1 / c1 as f64 {
                break;
            }
            blocks.pop();
            *blocks.last_mut().unwrap() = (s0 + s1, c0 + c1);
        }
    }
    blocks
        .into_iter()
        .flat_map(|(s, c)| std::iter::repeat_n(s / c as f64, c))
        .collect()
}

fn repair_monotone(values: &mut Vec<f64>) -> Result<()> {
    let Some(i) = values.windows(2).position(|w| w[1] < w[0]) else {
        return Ok(());
    };
    let range = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - values.iter().cloned().fold(f64::INFINITY, f64::min);
    let worst = values
        .windows(2)
        .map(|w| w[0] - w[1])
        .fold(0.0_f64, f64::max);
    if worst > MONOTONE_REPAIR_LIMIT * range {
        return Err(Error::NotMonotone {
            index: i + 1,
            prev: values[i],
            next: values[i + 1],
        });
    }
    *values = isotonic_regression(values);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};
    use statrs::distribution::{ContinuousCDF, Normal};

    // Hyndman–Fan type 7 by explicit order-statistic arithmetic.
    fn type7_oracle(samples: &[f64], p: f64) -> f64 {
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let pos = 1.0 + (s.len() as f64 - 1.0) * p; // 1-based position
        let j = pos.floor() as usize;
        let g = pos - j as f64;
        if j >= s.len() {
            return s[s.len() - 1];
        }
        (1.0 - g) * s[j - 1] + g * s[j]
    }

    #[test]
    fn sqi_point_mass() {
        let grid = ProbGrid::default();
        let q = estimate_quantile(&[0.5; 100], &grid, Strategy::Sqi, None).unwrap();
        assert!(q.values().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn sqi_matches_type7() {
        let grid = ProbGrid::uniform(5).unwrap();
        let samples = [4.0, 1.0, 3.0, 2.0];
        let q = estimate_quantile(&samples, &grid, Strategy::Sqi, None).unwrap();
        assert_eq!(q.values()[2], 2.5);
        for (&t, &v) in grid.points().iter().zip(q.values()) {
            assert_eq!(v, type7_oracle(&samples, t));
        }
        assert_eq!(q.values()[0], 1.0);
        assert_eq!(q.values()[4], 4.0);
    }

    #[test]
    fn kse_recovers_normal_quantiles() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let samples: Vec<f64> = (0..10_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let grid = ProbGrid::default();
        let q = estimate_quantile(&samples, &grid, Strategy::Kse, None).unwrap();
        let normal = Normal::standard();
        let worst = grid
            .points()
            .iter()
            .zip(q.values())
            .filter(|(t, _)| (0.05..=0.95).contains(*t))
            .map(|(&t, &v)| (v - normal.inverse_cdf(t)).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 0.05, "max deviation {worst}");
    }

    #[test]
    fn estimation_errors() {
        let grid = ProbGrid::default();
        assert_eq!(
            estimate_quantile(&[], &grid, Strategy::Sqi, None),
            Err(Error::EmptySamples)
        );
        assert_eq!(
            estimate_quantile(&[1.0, f64::INFINITY], &grid, Strategy::Sqi, None),
            Err(Error::NonFinite { index: 1 })
        );
        assert_eq!(
            estimate_quantile(&[2.0; 10], &grid, Strategy::Kse, None),
            Err(Error::DegenerateSamples)
        );
        assert!(estimate_quantile(&[1.0, 2.0], &grid, Strategy::Kse, Some(-1.0)).is_err());
        assert!(estimate_quantile(&[1.0, 2.0], &grid, Strategy::Kse, Some(0.3)).is_ok());
    }

    #[test]
    fn isotonic_projection() {
        assert_eq!(isotonic_regression(&[1.0, 3.0, 2.0, 4.0]), vec![1.0, 2.5, 2.5, 4.0]);
        assert_eq!(isotonic_regression(&[3.0, 2.0, 1.0]), vec![2.0, 2.0, 2.0]);
        let mut v = vec![0.0, 1.0, 0.999, 2.0];
        repair_monotone(&mut v).unwrap();
        assert!(v.windows(2).all(|w| w[1] >= w[0]));
        let mut bad = vec![0.0, 1.0, 0.5, 1.0];
        assert!(repair_monotone(&mut bad).is_err());
    }

    #[test]
    fn strategy_parses_case_insensitively() {
        assert_eq!("kse".parse::<Strategy>().unwrap(), Strategy::Kse);
        assert_eq!("SQI".parse::<Strategy>().unwrap(), Strategy::Sqi);
        assert!("spline".parse::<Strategy>().is_err());
    }
}
