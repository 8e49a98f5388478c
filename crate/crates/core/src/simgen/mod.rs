// SPDX-License-Identifier: MIT OR Apache-2.0

//! Seeded synthetic distributional sequences with known change points, and
//! the Hausdorff score for estimated change-point sets.

mod gp;
mod invert;

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::distrib::{inverse_lqd, DistSeq, LqdFunction, ProbGrid, QuantileFunction};
use crate::error::{Error, Result};

pub use gp::{sample_gp, GpKernel, GpSampler};
use invert::{beta_quantiles, truncated_normal_quantiles, BetaMixture};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dgp {
    Dgp1,
    Dgp2,
    Dgp3,
    Scaling,
}

impl fmt::Display for Dgp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dgp::Dgp1 => "dgp1",
            Dgp::Dgp2 => "dgp2",
            Dgp::Dgp3 => "dgp3",
            Dgp::Scaling => "scaling",
        })
    }
}

impl FromStr for Dgp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dgp1" => Ok(Dgp::Dgp1),
            "dgp2" => Ok(Dgp::Dgp2),
            "dgp3" => Ok(Dgp::Dgp3),
            "scaling" => Ok(Dgp::Scaling),
            other => Err(Error::param(format!("unknown generator '{other}'"))),
        }
    }
}

/// A generated sequence with its planted change points (1-based, each the
/// last index of a segment).
#[derive(Clone, Debug, PartialEq)]
pub struct SimTruth {
    pub seq: DistSeq,
    pub true_cps: Vec<usize>,
    pub dgp: Dgp,
    pub seed: u64,
}

fn segment_bounds(n: usize, segments: usize) -> Result<usize> {
    if n == 0 || !n.is_multiple_of(segments) {
        return Err(Error::param(format!(
            "n = {n} must be a positive multiple of {segments}"
        )));
    }
    Ok(n / segments)
}

fn interior_breaks(len: usize, segments: usize) -> Vec<usize> {
    (1..segments).map(|j| j * len).collect()
}

/// One segment of a truncated-normal sequence: centres drawn from
/// `U(center − half_width, center + half_width)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruncNormSegment {
    pub center: f64,
    pub half_width: f64,
    pub len: usize,
}

pub const DGP1_SEGMENTS: [(f64, f64); 4] = [(0.44, 0.005), (0.44, 0.05), (0.48, 0.05), (0.40, 0.1)];
pub const DGP1_SIGMA: f64 = 0.02;

/// Elements are `N(mᵢ, σ²)` truncated to `[0, 1]`, with `mᵢ` drawn per segment.
pub fn truncnorm_sequence(
    segments: &[TruncNormSegment],
    sigma: f64,
    seed: u64,
    grid: &ProbGrid,
) -> Result<DistSeq> {
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(Error::param(format!("sigma must be positive, got {sigma}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(segments.iter().map(|s| s.len).sum::<usize>() * grid.len());
    for s in segments {
        if s.half_width.is_nan() || s.half_width < 0.0 {
            return Err(Error::param("segment half width must be non-negative"));
        }
        for _ in 0..s.len {
            let m = if s.half_width > 0.0 {
                rng.random_range(s.center - s.half_width..=s.center + s.half_width)
            } else {
                s.center
            };
            data.extend(truncated_normal_quantiles(m, sigma, grid.points()));
        }
    }
    DistSeq::from_matrix(grid.clone(), data)
}

pub fn dgp1(seed: u64, n: usize, grid: &ProbGrid) -> Result<SimTruth> {
    let len = segment_bounds(n, 4)?;
    let segments: Vec<_> = DGP1_SEGMENTS
        .iter()
        .map(|&(center, half_width)| TruncNormSegment {
            center,
            half_width,
            len,
        })
        .collect();
    Ok(SimTruth {
        seq: truncnorm_sequence(&segments, DGP1_SIGMA, seed, grid)?,
        true_cps: interior_breaks(len, 4),
        dgp: Dgp::Dgp1,
        seed,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dgp2Params {
    pub kernel: GpKernel,
    /// Covariance scale per segment.
    pub theta: [f64; 4],
}

impl Default for Dgp2Params {
    fn default() -> Self {
        Self {
            kernel: GpKernel::default(),
            theta: [0.003, 0.030, 0.001, 0.035],
        }
    }
}

fn dgp2_functions(seed: u64, n: usize, grid: &ProbGrid, params: &Dgp2Params) -> Result<Vec<Vec<f64>>> {
    let len = segment_bounds(n, 4)?;
    let means = (1..=4)
        .map(|j| {
            let j = j as f64;
            BetaMixture::new((28.0, 22.0 + 2.0 * j), (14.0, 31.0 + j)).map(|m| m.lqd(grid.points()))
        })
        .collect::<Result<Vec<_>>>()?;
    let sampler = GpSampler::new(params.kernel, grid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|i| {
            let j = i / len;
            let e = sampler.sample(params.theta[j], &mut rng);
            means[j].iter().zip(e).map(|(d, e)| d + e).collect()
        })
        .collect())
}

fn from_lqd_rows(rows: Vec<Vec<f64>>, grid: &ProbGrid) -> Result<DistSeq> {
    let qs = rows
        .into_iter()
        .map(|psi| inverse_lqd(&LqdFunction::new(grid.clone(), psi)?))
        .collect::<Result<Vec<QuantileFunction>>>()?;
    DistSeq::from_quantiles(&qs)
}

pub fn dgp2(seed: u64, n: usize, grid: &ProbGrid) -> Result<SimTruth> {
    dgp2_with(seed, n, grid, &Dgp2Params::default())
}

pub fn dgp2_with(seed: u64, n: usize, grid: &ProbGrid, params: &Dgp2Params) -> Result<SimTruth> {
    let rows = dgp2_functions(seed, n, grid, params)?;
    Ok(SimTruth {
        seq: from_lqd_rows(rows, grid)?,
        true_cps: interior_breaks(n / 4, 4),
        dgp: Dgp::Dgp2,
        seed,
    })
}

const FOURIER_TERMS: usize = 40;

/// Non-zero Fourier coefficients of the break function at each of the nine
/// change points.
pub const DGP3_BREAK_SETS: [&[usize]; 9] = [
    &[1, 2, 3],
    &[4, 5, 6, 7, 8],
    &[11, 12, 13],
    &[12, 13, 14, 15],
    &[16, 17, 18],
    &[21, 22, 23],
    &[24, 25, 26, 27, 28],
    &[29, 30, 31, 32, 33, 34, 35],
    &[35, 36, 37, 38, 39, 40],
];
const DGP3_NOISE_SCALE: f64 = 0.15;

/// `η₁ = 1`, `η_{2k} = √2 sin(2πkt)`, `η_{2k+1} = √2 cos(2πkt)`.
pub fn fourier_basis(l: usize, t: f64) -> f64 {
    match l {
        0 => panic!("Fourier basis index starts at 1"),
        1 => 1.0,
        l if l % 2 == 0 => SQRT_2 * (2.0 * PI * (l / 2) as f64 * t).sin(),
        l => SQRT_2 * (2.0 * PI * (l / 2) as f64 * t).cos(),
    }
}

fn dgp3_functions(seed: u64, n: usize, grid: &ProbGrid) -> Result<Vec<Vec<f64>>> {
    let len = segment_bounds(n, 10)?;
    let t = grid.points();
    let basis: Vec<Vec<f64>> = (1..=FOURIER_TERMS)
        .map(|l| t.iter().map(|&x| fourier_basis(l, x)).collect())
        .collect();
    let base = BetaMixture::new((28.0, 24.0), (14.0, 32.0))?.lqd(t);
    let mut means = vec![base.clone()];
    for (j, set) in DGP3_BREAK_SETS.iter().enumerate() {
        let amp = (-((j + 1) as f64) / 2.0).exp() / (set.len() as f64).sqrt();
        let mut mean = base.clone();
        for &l in *set {
            for (m, b) in mean.iter_mut().zip(&basis[l - 1]) {
                *m += amp * b;
            }
        }
        means.push(mean);
    }
    let noise: Vec<Normal<f64>> = (1..=FOURIER_TERMS)
        .map(|l| Normal::new(0.0, 20f64.powf(-(l as f64) / 2.0)).expect("finite sd"))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|i| {
            let mut psi = means[i / len].clone();
            for (dist, b) in noise.iter().zip(&basis) {
                let w = DGP3_NOISE_SCALE * dist.sample(&mut rng);
                for (p, v) in psi.iter_mut().zip(b) {
                    *p += w * v;
                }
            }
            psi
        })
        .collect())
}

/// Ten equal segments whose means differ in a few Fourier directions of the
/// log quantile density.
pub fn dgp3(seed: u64, n: usize, grid: &ProbGrid) -> Result<SimTruth> {
    let rows = dgp3_functions(seed, n, grid)?;
    Ok(SimTruth {
        seq: from_lqd_rows(rows, grid)?,
        true_cps: interior_breaks(n / 10, 10),
        dgp: Dgp::Dgp3,
        seed,
    })
}

const SCALING_BLOCK: usize = 500;
const SCALING_HALF: usize = 250;

/// Prefixes of `n_dup` copies of a 500-element Beta(aᵢ, 32) block whose
/// shape parameter shifts after element 250.
pub fn scaling_sequences(
    n_dup: usize,
    lengths: &[usize],
    seed: u64,
    grid: &ProbGrid,
) -> Result<Vec<SimTruth>> {
    let available = SCALING_BLOCK * n_dup;
    if let Some(&requested) = lengths.iter().find(|&&l| l > available || l == 0) {
        if requested == 0 {
            return Err(Error::param("requested length must be positive"));
        }
        return Err(Error::LengthExceedsData {
            requested,
            available,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut block = Vec::with_capacity(SCALING_BLOCK * grid.len());
    for i in 0..SCALING_BLOCK {
        let a = if i < SCALING_HALF {
            rng.random_range(13.0..17.0)
        } else {
            rng.random_range(16.0..20.0)
        };
        block.extend(beta_quantiles(a, 32.0, grid.points())?);
    }
    let m = grid.len();
    lengths
        .iter()
        .map(|&len| {
            let data: Vec<f64> = block.iter().copied().cycle().take(len * m).collect();
            Ok(SimTruth {
                seq: DistSeq::from_matrix(grid.clone(), data)?,
                true_cps: (1..)
                    .map(|j| j * SCALING_HALF)
                    .take_while(|&k| k < len)
                    .collect(),
                dgp: Dgp::Scaling,
                seed,
            })
        })
        .collect()
}

/// `max(max_{t∈truth} min_{e∈est} |t − e|, max_{e∈est} min_{t∈truth} |t − e|)`;
/// an empty estimate scores `max truth`.
pub fn hausdorff(truth: &[usize], est: &[usize]) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::param("true change-point set must not be empty"));
    }
    if est.is_empty() {
        return Ok(*truth.iter().max().expect("non-empty") as f64);
    }
    let directed = |a: &[usize], b: &[usize]| {
        a.iter()
            .map(|&x| b.iter().map(|&y| x.abs_diff(y)).min().expect("non-empty"))
            .max()
            .expect("non-empty")
    };
    Ok(directed(truth, est).max(directed(est, truth)) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dgp1_structure() {
        let grid = ProbGrid::default();
        let sim = dgp1(3, 800, &grid).unwrap();
        assert_eq!(sim.true_cps, vec![200, 400, 600]);
        assert_eq!(sim.seq.len(), 800);
        for row in sim.seq.rows() {
            assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
            assert!(row.windows(2).all(|w| w[1] >= w[0]));
        }
        // median of a truncated normal far from the bounds is its centre
        for i in 0..200 {
            let med = sim.seq.row(i)[100];
            assert!((med - 0.44).abs() <= 0.005 + 1e-12, "{med}");
        }
        assert_eq!(dgp1(3, 800, &grid).unwrap(), sim);
        assert_ne!(dgp1(4, 800, &grid).unwrap().seq, sim.seq);
        assert!(dgp1(3, 801, &grid).is_err());
    }

    #[test]
    fn dgp2_without_noise_is_piecewise_constant() {
        let grid = ProbGrid::default();
        let params = Dgp2Params {
            theta: [0.0; 4],
            ..Dgp2Params::default()
        };
        let sim = dgp2_with(1, 40, &grid, &params).unwrap();
        assert_eq!(sim.true_cps, vec![10, 20, 30]);
        for seg in 0..4 {
            for i in seg * 10..seg * 10 + 10 {
                assert_eq!(sim.seq.row(i), sim.seq.row(seg * 10));
            }
        }
        assert_ne!(sim.seq.row(0), sim.seq.row(10));
    }

    #[test]
    fn dgp2_noise_follows_theta() {
        let grid = ProbGrid::default();
        let rows = dgp2_functions(9, 200, &grid, &Dgp2Params::default()).unwrap();
        // 50 draws per segment; average pointwise variance across the grid
        let seg_var = |j: usize| {
            let seg = &rows[j * 50..(j + 1) * 50];
            (0..grid.len())
                .map(|c| {
                    let m = seg.iter().map(|r| r[c]).sum::<f64>() / 50.0;
                    seg.iter().map(|r| (r[c] - m).powi(2)).sum::<f64>() / 49.0
                })
                .sum::<f64>()
                / grid.len() as f64
        };
        assert!(seg_var(3) > seg_var(2));
        assert!(seg_var(1) > seg_var(0));
        let sim = dgp2(9, 800, &grid).unwrap();
        assert_eq!(sim.true_cps, vec![200, 400, 600]);
    }

    #[test]
    fn dgp2_mean_is_the_mixture_lqd() {
        let grid = ProbGrid::default();
        let params = Dgp2Params {
            theta: [0.0; 4],
            ..Dgp2Params::default()
        };
        let sim = dgp2_with(0, 4, &grid, &params).unwrap();
        let mix = BetaMixture::new((28.0, 24.0), (14.0, 32.0)).unwrap();
        let direct = inverse_lqd(&LqdFunction::new(grid.clone(), mix.lqd(grid.points())).unwrap()).unwrap();
        assert_eq!(sim.seq.row(0), direct.values());

        // the transformed mean converges to the mixture quantile on finer grids
        let fine = ProbGrid::uniform(4001).unwrap();
        let q = inverse_lqd(&LqdFunction::new(fine.clone(), mix.lqd(fine.points())).unwrap()).unwrap();
        let exact = invert::unit_quantiles(|x| mix.cdf(x), |x| mix.pdf(x), fine.points());
        for (a, b) in q.values().iter().zip(&exact) {
            assert!((a - b).abs() < 1e-4, "{a} vs {b}");
        }
    }

    #[test]
    fn dgp3_structure() {
        let grid = ProbGrid::default();
        let sim = dgp3(5, 800, &grid).unwrap();
        assert_eq!(sim.true_cps, (1..10).map(|j| 80 * j).collect::<Vec<_>>());
        assert_eq!(sim.true_cps[6], 560);
        assert_eq!(dgp3(5, 800, &grid).unwrap(), sim);
        assert!(dgp3(5, 805, &grid).is_err());
    }

    #[test]
    fn fourier_basis_is_orthonormal() {
        let m = 4001;
        let grid = ProbGrid::uniform(m).unwrap();
        for a in [1, 2, 3, 8, 17, 40] {
            for b in [1, 2, 3, 8, 17, 40] {
                let f: Vec<f64> = grid
                    .points()
                    .iter()
                    .map(|&t| fourier_basis(a, t) * fourier_basis(b, t))
                    .collect();
                let ip = grid.integrate(&f);
                let expected = if a == b { 1.0 } else { 0.0 };
                assert!((ip - expected).abs() < 1e-6, "<{a},{b}> = {ip}");
            }
        }
    }

    #[test]
    fn scaling_truths() {
        let grid = ProbGrid::uniform(21).unwrap();
        let sims = scaling_sequences(2, &[250, 500, 1000], 8, &grid).unwrap();
        assert!(sims[0].true_cps.is_empty());
        assert_eq!(sims[1].true_cps, vec![250]);
        assert_eq!(sims[2].true_cps, vec![250, 500, 750]);
        assert_eq!(sims[1].seq.matrix(), &sims[2].seq.matrix()[..500 * 21]);
        assert_eq!(sims[2].seq.row(3), sims[2].seq.row(503));
        assert!(matches!(
            scaling_sequences(2, &[1001], 8, &grid),
            Err(Error::LengthExceedsData { requested: 1001, available: 1000 })
        ));
    }

    #[test]
    fn hausdorff_examples() {
        let truth = [200, 400, 600];
        assert_eq!(hausdorff(&truth, &truth).unwrap(), 0.0);
        assert_eq!(hausdorff(&truth, &[210, 395, 600]).unwrap(), 10.0);
        assert_eq!(hausdorff(&truth, &[]).unwrap(), 600.0);
        assert_eq!(hausdorff(&truth, &[400]).unwrap(), 200.0);
        assert!(hausdorff(&[], &[3]).is_err());
    }

    #[test]
    fn dgp_names_round_trip() {
        for d in [Dgp::Dgp1, Dgp::Dgp2, Dgp::Dgp3, Dgp::Scaling] {
            assert_eq!(d.to_string().parse::<Dgp>().unwrap(), d);
        }
    }
}
