// SPDX-License-Identifier: MIT OR Apache-2.0

use super::{check_length, critical_value, epsilon, pick_blocks, ChangePointSet, Normalizer, ScanProfile};
use crate::error::{Error, Result};

/// Mean-change MOSUM profile `sqrt(G/2)·|x̄_R − x̄_L| / σ̂_k` over `[G, n − G]`,
/// where `σ̂_k²` averages the two local (1/G) variances.
pub fn scalar_mosum_profile(x: &[f64], bandwidth: usize, alpha: f64) -> Result<ScanProfile> {
    let n = x.len();
    check_length(n, bandwidth)?;
    if let Some(index) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let threshold = critical_value(n, bandwidth, alpha)?;
    let g = bandwidth;

    let center = x.iter().sum::<f64>() / n as f64;
    let mut s1 = vec![0.0; n + 1];
    let mut s2 = vec![0.0; n + 1];
    for (i, v) in x.iter().enumerate() {
        let c = v - center;
        s1[i + 1] = s1[i] + c;
        s2[i + 1] = s2[i] + c * c;
    }
    let scale = x.iter().map(|v| (v - center).abs()).fold(0.0, f64::max);
    let norm = Normalizer::new(s2[n] / n as f64, scale);

    let gf = g as f64;
    let moments = |a: usize, b: usize| {
        let m = (s1[b] - s1[a]) / gf;
        (m, ((s2[b] - s2[a]) / gf - m * m).max(0.0))
    };
    let mut values = vec![0.0; n];
    let mut degenerate = Vec::new();
    for k in g..=n - g {
        let (m_l, v_l) = moments(k - g, k);
        let (m_r, v_r) = moments(k, k + g);
        let (t, floored) = norm.apply((m_r - m_l).abs(), 0.5 * (v_l + v_r), 0.5 * gf);
        values[k - 1] = t;
        if floored {
            degenerate.push(k);
        }
    }
    Ok(ScanProfile {
        n,
        bandwidth: g,
        threshold,
        values,
        first: g,
        last: n - g,
        degenerate,
    })
}

pub fn scalar_mosum_detect(
    x: &[f64],
    bandwidth: usize,
    alpha: f64,
    min_block_len: usize,
) -> Result<ChangePointSet> {
    if min_block_len == 0 {
        return Err(Error::param("minimum block length must be at least 1"));
    }
    let profile = scalar_mosum_profile(x, bandwidth, alpha)?;
    Ok(pick_blocks(&profile, epsilon(min_block_len, bandwidth)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn constant_vector_is_quiet() {
        assert!(scalar_mosum_detect(&[3.0; 200], 20, 0.05, 15).unwrap().is_empty());
    }

    #[test]
    fn statistic_matches_direct_formula() {
        let x = noise(100, 9);
        let g = 12;
        let p = scalar_mosum_profile(&x, g, 0.05).unwrap();
        for k in [12, 40, 88] {
            let l = &x[k - g..k];
            let r = &x[k..k + g];
            let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
            let var = |s: &[f64]| {
                let m = mean(s);
                s.iter().map(|v| (v - m).powi(2)).sum::<f64>() / s.len() as f64
            };
            let t = (g as f64 / 2.0).sqrt() * (mean(r) - mean(l)).abs()
                / (0.5 * (var(l) + var(r))).sqrt();
            assert!((p.value(k) - t).abs() < 1e-10);
        }
    }

    #[test]
    fn step_is_located() {
        let hits = (0..20)
            .filter(|&seed| {
                let mut x = noise(600, seed);
                x[300..].iter_mut().for_each(|v| *v += 5.0);
                let cps = scalar_mosum_detect(&x, 40, 0.05, 15).unwrap();
                cps.q_hat() == 1 && cps.indices()[0].abs_diff(300) <= 40
            })
            .count();
        assert!(hits >= 19, "{hits}/20");
    }

    #[test]
    fn noise_false_positive_rate() {
        let rejections = (0..200)
            .filter(|&seed| !scalar_mosum_detect(&noise(600, 1000 + seed), 40, 0.05, 15).unwrap().is_empty())
            .count();
        assert!(rejections as f64 / 200.0 <= 0.10, "{rejections}/200");
    }

    #[test]
    fn jump_between_constant_windows_is_floored() {
        let mut x = vec![0.0; 100];
        x[50..].iter_mut().for_each(|v| *v = 1.0);
        let cps = scalar_mosum_detect(&x, 10, 0.05, 5).unwrap();
        assert_eq!(cps.indices(), vec![50]);
    }
}
