// SPDX-License-Identifier: MIT OR Apache-2.0

use statrs::distribution::{Beta, Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};

const MAX_ITER: usize = 200;
const X_TOL: f64 = 1e-15;

/// Safeguarded Newton solve of `cdf(x) = p` on `[lo, hi]`, starting at `x0`.
pub(crate) fn invert_cdf(
    cdf: impl Fn(f64) -> f64,
    pdf: impl Fn(f64) -> f64,
    p: f64,
    (mut lo, mut hi): (f64, f64),
    x0: f64,
) -> f64 {
    let mut x = x0.clamp(lo, hi);
    for _ in 0..MAX_ITER {
        let f = cdf(x) - p;
        if f == 0.0 {
            return x;
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= X_TOL * (1.0 + x.abs()) {
            break;
        }
        let d = pdf(x);
        if d > 0.0 {
            let step = f / d;
            let newton = x - step;
            if newton > lo && newton < hi {
                x = newton;
                if step.abs() <= X_TOL * (1.0 + x.abs()) {
                    return x;
                }
                continue;
            }
        }
        x = 0.5 * (lo + hi);
    }
    x
}

/// Quantile function on `levels` of a density supported on `[0, 1]`, with
/// `Q(0) = 0` and `Q(1) = 1`.
pub(crate) fn unit_quantiles(
    cdf: impl Fn(f64) -> f64,
    pdf: impl Fn(f64) -> f64,
    levels: &[f64],
) -> Vec<f64> {
    let mut prev = 0.0;
    levels
        .iter()
        .map(|&t| {
            let q = if t <= 0.0 {
                0.0
            } else if t >= 1.0 {
                1.0
            } else {
                invert_cdf(&cdf, &pdf, t, (prev, 1.0), prev.max(1e-3))
            };
            prev = q;
            q
        })
        .collect()
}

pub(crate) fn beta(a: f64, b: f64) -> Result<Beta> {
    Beta::new(a, b).map_err(|e| Error::param(format!("Beta({a}, {b}): {e}")))
}

pub(crate) fn beta_quantiles(a: f64, b: f64, levels: &[f64]) -> Result<Vec<f64>> {
    let d = beta(a, b)?;
    Ok(unit_quantiles(|x| d.cdf(x), |x| d.pdf(x), levels))
}

/// Density `0.9·(0.8·Beta(a₁, b₁) + 0.2·Beta(a₂, b₂)) + 0.1` on `[0, 1]`.
#[derive(Clone, Debug)]
pub(crate) struct BetaMixture {
    major: Beta,
    minor: Beta,
}

impl BetaMixture {
    pub(crate) fn new((a1, b1): (f64, f64), (a2, b2): (f64, f64)) -> Result<Self> {
        Ok(Self {
            major: beta(a1, b1)?,
            minor: beta(a2, b2)?,
        })
    }

    pub(crate) fn pdf(&self, x: f64) -> f64 {
        0.9 * (0.8 * self.major.pdf(x) + 0.2 * self.minor.pdf(x)) + 0.1
    }

    pub(crate) fn cdf(&self, x: f64) -> f64 {
        0.9 * (0.8 * self.major.cdf(x) + 0.2 * self.minor.cdf(x)) + 0.1 * x
    }

    /// Log quantile density `−log f(Q(t))` on `levels`.
    pub(crate) fn lqd(&self, levels: &[f64]) -> Vec<f64> {
        unit_quantiles(|x| self.cdf(x), |x| self.pdf(x), levels)
            .into_iter()
            .map(|q| -self.pdf(q).ln())
            .collect()
    }
}

/// Quantiles of `N(m, σ²)` truncated to `[0, 1]`; tails use the
/// complementary CDF to keep precision far from the mean.
pub(crate) fn truncated_normal_quantiles(m: f64, sigma: f64, levels: &[f64]) -> Vec<f64> {
    let std = Normal::standard();
    let a = (0.0 - m) / sigma;
    let b = (1.0 - m) / sigma;
    let (lower_a, lower_b) = (std.cdf(a), std.cdf(b));
    let (upper_a, upper_b) = (std.cdf(-a), std.cdf(-b));
    let mass = if a > 0.0 { upper_a - upper_b } else { lower_b - lower_a };
    levels
        .iter()
        .map(|&t| {
            if t <= 0.0 {
                return 0.0;
            }
            if t >= 1.0 {
                return 1.0;
            }
            let z = if t <= 0.5 {
                std.inverse_cdf(lower_a + t * mass)
            } else {
                -std.inverse_cdf(upper_b + (1.0 - t) * mass)
            };
            (m + sigma * z).clamp(0.0, 1.0)
        })
        .collect()
}
