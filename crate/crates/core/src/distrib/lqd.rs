// SPDX-License-Identifier: MIT OR Apache-2.0

//! Log quantile density transform `ψ(t) = log Q'(t)` and its inverse
//! `Q(t) = ∫₀ᵗ e^ψ / ∫₀¹ e^ψ`.

use super::{ProbGrid, QuantileFunction};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct LqdFunction {
    grid: ProbGrid,
    values: Vec<f64>,
}

impl LqdFunction {
    pub fn new(grid: ProbGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &ProbGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Derivative at `x[k]` of the Lagrange polynomial through `(x, y)`.
fn lagrange_derivative(x: &[f64], y: &[f64], k: usize) -> f64 {
    let mut d = 0.0;
    for i in 0..x.len() {
        let w = if i == k {
            (0..x.len()).filter(|&m| m != k).map(|m| 1.0 / (x[k] - x[m])).sum()
        } else {
            let num: f64 = (0..x.len()).filter(|&m| m != i && m != k).map(|m| x[k] - x[m]).product();
            let den: f64 = (0..x.len()).filter(|&m| m != i).map(|m| x[i] - x[m]).product();
            num / den
        };
        d += w * y[i];
    }
    d
}

fn lagrange_eval(x: &[f64], y: &[f64], at: f64) -> f64 {
    (0..x.len())
        .map(|i| {
            let l: f64 = (0..x.len())
                .filter(|&m| m != i)
                .map(|m| (at - x[m]) / (x[i] - x[m]))
                .product();
            l * y[i]
        })
        .sum()
}

/// Window of `width` consecutive indices as centred on `j` as the ends allow.
fn window(j: usize, width: usize, m: usize) -> std::ops::Range<usize> {
    let start = j.saturating_sub(width / 2).min(m - width);
    start..start + width
}

/// `Q'` on the grid from five-point (then three-, then two-point) Lagrange
/// stencils, taking the highest order that gives a positive slope.
fn quantile_density(t: &[f64], v: &[f64]) -> Vec<f64> {
    let m = v.len();
    (0..m)
        .map(|j| {
            for width in [5, 3] {
                if m >= width {
                    let w = window(j, width, m);
                    let d = lagrange_derivative(&t[w.clone()], &v[w.clone()], j - w.start);
                    if d > 0.0 && d.is_finite() {
                        return d;
                    }
                }
            }
            let (a, b) = if j + 1 < m { (j, j + 1) } else { (j - 1, j) };
            (v[b] - v[a]) / (t[b] - t[a])
        })
        .collect()
}

pub fn lqd_transform(q: &QuantileFunction) -> Result<LqdFunction> {
    let t = q.grid().points();
    let v = q.values();
    if let Some(i) = v.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::NotStrictlyIncreasing { index: i + 1 });
    }
    let values = quantile_density(t, v).into_iter().map(f64::ln).collect();
    LqdFunction::new(q.grid().clone(), values)
}

// Two-point Gauss-Legendre nodes on [-1, 1]; exact for the cubic pieces.
const GAUSS: f64 = 0.577_350_269_189_625_8;

/// Quantile function on the grid's span, normalised to run from 0 to 1.
/// `e^ψ` is integrated piecewise through cubic interpolants, falling back to
/// the trapezoid on any interval where the cubic piece is not positive.
pub fn inverse_lqd(psi: &LqdFunction) -> Result<QuantileFunction> {
    let t = psi.grid.points();
    let m = t.len();
    // e^ψ is rescaled by its maximum; the normalisation absorbs the factor
    let top = psi.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = psi.values.iter().map(|p| (p - top).exp()).collect();
    let mut cum = vec![0.0; m];
    for j in 0..m - 1 {
        let (a, b) = (t[j], t[j + 1]);
        let trapezoid = 0.5 * (b - a) * (e[j] + e[j + 1]);
        let piece = if m >= 4 {
            let w = window(j, 4, m);
            let (x, y) = (&t[w.clone()], &e[w]);
            let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
            let p1 = lagrange_eval(x, y, mid - half * GAUSS);
            let p2 = lagrange_eval(x, y, mid + half * GAUSS);
            if p1 > 0.0 && p2 > 0.0 {
                half * (p1 + p2)
            } else {
                trapezoid
            }
        } else {
            trapezoid
        };
        cum[j + 1] = cum[j] + piece;
    }
    let theta = cum[m - 1];
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::Numerical(format!(
            "LQD normalising constant is {theta}"
        )));
    }
    let values = cum.iter().map(|c| c / theta).collect();
    QuantileFunction::new(psi.grid.clone(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{Beta, Continuous, ContinuousCDF};

    fn qf(grid: &ProbGrid, f: impl Fn(f64) -> f64) -> QuantileFunction {
        QuantileFunction::new(grid.clone(), grid.points().iter().map(|&t| f(t)).collect()).unwrap()
    }

    #[test]
    fn uniform_and_scaled_uniform() {
        let g = ProbGrid::default();
        let psi = lqd_transform(&qf(&g, |t| t)).unwrap();
        assert!(psi.values().iter().all(|v| v.abs() < 1e-12));
        let psi2 = lqd_transform(&qf(&g, |t| 2.0 * t)).unwrap();
        assert!(psi2.values().iter().all(|v| (v - 2f64.ln()).abs() < 1e-12));
    }

    #[test]
    fn inverse_of_constants_is_uniform() {
        let g = ProbGrid::default();
        for c in [0.0, 2f64.ln(), -3.0, 50.0] {
            let psi = LqdFunction::new(g.clone(), vec![c; g.len()]).unwrap();
            let q = inverse_lqd(&psi).unwrap();
            for (a, b) in q.values().iter().zip(g.points()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn beta_lqd_matches_analytic_density() {
        let g = ProbGrid::uniform(2001).unwrap();
        let beta = Beta::new(28.0, 24.0).unwrap();
        let q = qf(&g, |t| beta.inverse_cdf(t));
        let psi = lqd_transform(&q).unwrap();
        for (&t, &p) in g.points().iter().zip(psi.values()) {
            if (0.05..=0.95).contains(&t) {
                let exact = -beta.pdf(beta.inverse_cdf(t)).ln();
                assert!((p - exact).abs() < 1e-4, "t={t}: {p} vs {exact}");
            }
        }
    }

    #[test]
    fn stencils_are_exact_for_low_degree_polynomials() {
        let x = [0.0, 0.1, 0.25, 0.3, 0.6];
        let f = |t: f64| 1.0 - 2.0 * t + 3.0 * t.powi(3) - t.powi(4);
        let df = |t: f64| -2.0 + 9.0 * t * t - 4.0 * t.powi(3);
        let y: Vec<f64> = x.iter().map(|&t| f(t)).collect();
        for k in 0..5 {
            assert!((lagrange_derivative(&x, &y, k) - df(x[k])).abs() < 1e-11);
        }
        assert!((lagrange_eval(&x, &y, 0.42) - f(0.42)).abs() < 1e-13);
    }

    #[test]
    fn quadratic_quantile_round_trips_exactly() {
        // Q' is linear, so every stencil and quadrature step is exact
        let uneven: Vec<f64> = (0..=40).map(|j| (j as f64 / 40.0).powf(1.5)).collect();
        for g in [ProbGrid::default(), ProbGrid::new(uneven).unwrap()] {
            let q = qf(&g, |t| 0.5 * (t + t * t));
            let back = inverse_lqd(&lqd_transform(&q).unwrap()).unwrap();
            for (a, b) in q.values().iter().zip(back.values()) {
                assert!((a - b).abs() < 1e-13, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn mixture_round_trip_on_default_grid() {
        let g = ProbGrid::default();
        let beta = Beta::new(2.0, 4.0).unwrap();
        let cdf = |x: f64| 0.3 * x + 0.7 * beta.cdf(x);
        let q = qf(&g, |p| {
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if cdf(mid) < p {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            if p == 0.0 { 0.0 } else if p == 1.0 { 1.0 } else { 0.5 * (lo + hi) }
        });
        let back = inverse_lqd(&lqd_transform(&q).unwrap()).unwrap();
        let err = q.values().iter().zip(back.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-4, "{err}");
    }

    #[test]
    fn flat_quantile_is_rejected() {
        let g = ProbGrid::uniform(5).unwrap();
        let q = QuantileFunction::new(g, vec![0.0, 0.1, 0.1, 0.5, 1.0]).unwrap();
        assert_eq!(
            lqd_transform(&q),
            Err(Error::NotStrictlyIncreasing { index: 2 })
        );
    }

    #[test]
    fn non_finite_psi_is_rejected() {
        let g = ProbGrid::uniform(3).unwrap();
        assert!(LqdFunction::new(g, vec![0.0, f64::NAN, 0.0]).is_err());
    }
}
