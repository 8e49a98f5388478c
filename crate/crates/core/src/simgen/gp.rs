// SPDX-License-Identifier: MIT OR Apache-2.0

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::distrib::ProbGrid;
use crate::error::{Error, Result};

const JITTER: f64 = 1e-10;

/// Kernel `κ(s, t) = exp(−|s − t|^η / (2ϱ²))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GpKernel {
    pub eta: f64,
    pub rho: f64,
}

impl Default for GpKernel {
    fn default() -> Self {
        Self { eta: 1.99999, rho: 0.2 }
    }
}

impl GpKernel {
    pub fn eval(&self, s: f64, t: f64) -> f64 {
        (-(s - t).abs().powf(self.eta) / (2.0 * self.rho * self.rho)).exp()
    }
}

/// Zero-mean Gaussian process draws on a grid through a cached factor
/// `V·sqrt(Λ)` of the (jittered) kernel matrix.
#[derive(Clone, Debug)]
pub struct GpSampler {
    factor: DMatrix<f64>,
}

impl GpSampler {
    pub fn new(kernel: GpKernel, grid: &ProbGrid) -> Result<Self> {
        let t = grid.points();
        let m = t.len();
        if m < 2 {
            return Err(Error::param("GP sampling needs at least two grid points"));
        }
        let mut k = DMatrix::from_fn(m, m, |i, j| kernel.eval(t[i], t[j]));
        if k.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("kernel matrix is not finite".into()));
        }
        for i in 0..m {
            k[(i, i)] += JITTER;
        }
        let eig = SymmetricEigen::new(k);
        let scale = DVector::from_iterator(m, eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()));
        let mut factor = eig.eigenvectors;
        for (mut col, s) in factor.column_iter_mut().zip(scale.iter()) {
            col *= *s;
        }
        Ok(Self { factor })
    }

    pub fn len(&self) -> usize {
        self.factor.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.factor.nrows() == 0
    }

    /// One draw with covariance `θ·κ`.
    pub fn sample<R: Rng + ?Sized>(&self, theta: f64, rng: &mut R) -> Vec<f64> {
        let m = self.len();
        let z = DVector::from_iterator(m, (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let amp = theta.max(0.0).sqrt();
        (&self.factor * z).iter().map(|v| amp * v).collect()
    }
}

pub fn sample_gp(kernel: GpKernel, grid: &ProbGrid, theta: f64, seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(GpSampler::new(kernel, grid)?.sample(theta, &mut rng))
}
