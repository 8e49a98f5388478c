// SPDX-License-Identifier: MIT OR Apache-2.0

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cpi::{band_search, grid_percentile, select_seeds, BandMode, CpiMatrix};
use crate::error::{Error, Result};

/// Marks attributed to one change point, as `(index, bandwidth)` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub batch: usize,
    /// Seed mark the trajectory grew from.
    pub seed: (usize, usize),
    pub points: Vec<(usize, usize)>,
}

impl Trajectory {
    pub fn new(batch: usize, seed: (usize, usize), points: Vec<(usize, usize)>) -> Self {
        Self {
            batch,
            seed,
            points,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Point with the largest bandwidth (first such point on ties).
    pub fn top(&self) -> Option<(usize, usize)> {
        self.points
            .iter()
            .copied()
            .reduce(|a, b| if b.1 > a.1 { b } else { a })
    }

    fn sorted_points(&self) -> Vec<(usize, usize)> {
        let mut p = self.points.clone();
        p.sort_unstable_by_key(|&(i, g)| (g, i));
        p
    }
}

/// Locally weighted average of trajectory indices at `g_target`, using the
/// `p*`-th smallest bandwidth distance as the window.
pub fn intersection_point(points: &[(usize, usize)], g_target: usize) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::param("intersection point of an empty trajectory"));
    }
    let m = points.len();
    let dist: Vec<f64> = points.iter().map(|&(_, g)| g.abs_diff(g_target) as f64).collect();
    let p_star = m.div_ceil(2).max(m.min(4));
    let mut sorted = dist.clone();
    sorted.sort_by(f64::total_cmp);
    let theta = sorted[p_star - 1];

    let mut weights: Vec<f64> = dist
        .iter()
        .map(|&d| if d <= theta && theta > 0.0 { 1.0 - d / theta } else { 0.0 })
        .collect();
    if weights.iter().all(|&w| w == 0.0) {
        weights = dist.iter().map(|&d| if d == theta { 1.0 } else { 0.0 }).collect();
    }
    let total: f64 = weights.iter().sum();
    Ok(points
        .iter()
        .zip(&weights)
        .map(|(&(i, _), w)| i as f64 * w)
        .sum::<f64>()
        / total)
}

/// Keeps at most one point per bandwidth. Duplicated bandwidths are removed
/// and, group by group in ascending bandwidth, the point nearest the
/// intersection point of what remains is put back; the rest are released.
pub fn prune_trajectory(traj: &mut Trajectory, cpi: &mut CpiMatrix, rng: &mut ChaCha8Rng) {
    let mut by_g = traj.sorted_points();
    by_g.dedup();
    let mut kept: Vec<(usize, usize)> = Vec::with_capacity(by_g.len());
    let mut groups: Vec<Vec<(usize, usize)>> = Vec::new();
    for chunk in by_g.chunk_by(|a, b| a.1 == b.1) {
        if chunk.len() == 1 {
            kept.push(chunk[0]);
        } else {
            groups.push(chunk.to_vec());
        }
    }
    if groups.is_empty() {
        return;
    }
    for group in groups {
        let g = group[0].1;
        let reference = if kept.is_empty() {
            traj.seed.0 as f64
        } else {
            intersection_point(&kept, g).expect("non-empty")
        };
        let best = group
            .iter()
            .map(|&(i, _)| (i as f64 - reference).abs())
            .fold(f64::INFINITY, f64::min);
        let ties: Vec<usize> = group
            .iter()
            .map(|&(i, _)| i)
            .filter(|&i| (i as f64 - reference).abs() == best)
            .collect();
        let chosen = if ties.len() == 1 {
            ties[0]
        } else {
            ties[rng.random_range(0..ties.len())]
        };
        let row = cpi.row_of(g).expect("trajectory bandwidth on the grid");
        for &(i, _) in &group {
            if i == chosen {
                kept.push((i, g));
            } else {
                cpi.release(row, i);
            }
        }
    }
    kept.sort_unstable_by_key(|&(i, g)| (g, i));
    traj.points = kept;
}

/// Search radii derived from the block-length rule `Δ_h(G) = min(G/2, L_m)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BandRule {
    pub min_block_len: usize,
}

impl BandRule {
    pub fn half_band(&self, bandwidth: usize) -> f64 {
        (0.5 * bandwidth as f64).min(self.min_block_len as f64)
    }

    pub fn neighbor_delta(&self, bandwidth: usize) -> usize {
        (self.half_band(bandwidth) / 2.0).ceil() as usize
    }
}

/// Grows one trajectory per still-free seed: a full band search, then
/// repeated upper-half searches from the topmost point.
pub fn coarse_search(
    cpi: &mut CpiMatrix,
    seeds: &[(usize, usize)],
    rule: BandRule,
    batch: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Trajectory> {
    let mut seeds = seeds.to_vec();
    seeds.sort_unstable();
    let guard = 4 * cpi.rows() + 4;
    let mut out = Vec::new();
    for seed in seeds {
        let Some(row) = cpi.row_of(seed.1) else {
            continue;
        };
        if !cpi.is_free(row, seed.0) {
            continue;
        }
        let points = band_search(cpi, seed, rule.half_band(seed.1), BandMode::Full);
        let mut traj = Trajectory::new(batch, seed, points);
        prune_trajectory(&mut traj, cpi, rng);
        for _ in 0..guard {
            let top = traj.top().expect("trajectory holds its seed");
            let found = band_search(cpi, top, rule.half_band(top.1), BandMode::UpperHalf);
            if found.is_empty() {
                break;
            }
            let before = traj.sorted_points();
            traj.points.extend(found);
            prune_trajectory(&mut traj, cpi, rng);
            if traj.sorted_points() == before {
                break;
            }
        }
        out.push(traj);
    }
    out
}

/// Absorbs free marks within `δ` above every trajectory point, including
/// points gained during the pass, then prunes.
pub fn refine_trajectories(
    trajs: &mut [Trajectory],
    cpi: &mut CpiMatrix,
    delta: usize,
    rng: &mut ChaCha8Rng,
) {
    for traj in trajs.iter_mut() {
        let mut k = 0;
        while k < traj.points.len() {
            let found = band_search(cpi, traj.points[k], delta as f64, BandMode::UpperHalf);
            traj.points.extend(found);
            k += 1;
        }
        prune_trajectory(traj, cpi, rng);
    }
}

/// Batch loop: the first batch seeds from the bandwidths between the given
/// grid percentiles, later batches from the whole grid, until every mark is
/// assigned.
pub fn identify_trajectories(
    cpi: &mut CpiMatrix,
    seed_percentiles: (f64, f64),
    rule: BandRule,
    rng: &mut ChaCha8Rng,
) -> Vec<Trajectory> {
    let g = cpi.g_grid().to_vec();
    let first = (
        grid_percentile(&g, seed_percentiles.0),
        grid_percentile(&g, seed_percentiles.1),
    );
    let full = (g[0] as f64, g[g.len() - 1] as f64);
    let mut all = Vec::new();
    let mut batch = 1;
    let guard = cpi.mark_count() + 1;
    while cpi.any_free() && batch <= guard {
        let mut seeds = if batch == 1 { select_seeds(cpi, first) } else { Vec::new() };
        if seeds.is_empty() {
            seeds = select_seeds(cpi, full);
        }
        let seed_g = seeds[0].1;
        let mut trajs = coarse_search(cpi, &seeds, rule, batch, rng);
        refine_trajectories(&mut trajs, cpi, rule.neighbor_delta(seed_g), rng);
        all.extend(trajs);
        batch += 1;
    }
    all
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    #[test]
    fn intersection_examples() {
        assert_eq!(intersection_point(&[(77, 30)], 50).unwrap(), 77.0);
        assert_eq!(intersection_point(&[(100, 30), (104, 40)], 50).unwrap(), 104.0);
        assert_eq!(intersection_point(&[(100, 40), (104, 60)], 50).unwrap(), 102.0);
        assert!(intersection_point(&[], 50).is_err());
    }

    #[test]
    fn intersection_weights_by_hand() {
        // m = 5: p* = max(3, 4) = 4; distances 2, 4, 6, 8, 10 → θ = 8
        let pts = [(10, 52), (20, 54), (30, 56), (40, 58), (50, 60)];
        let w = [1.0 - 2.0 / 8.0, 1.0 - 4.0 / 8.0, 1.0 - 6.0 / 8.0, 0.0, 0.0];
        let expected = (10.0 * w[0] + 20.0 * w[1] + 30.0 * w[2]) / (w[0] + w[1] + w[2]);
        assert!((intersection_point(&pts, 50).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn prune_backward_insertion() {
        let g = vec![40, 50, 60];
        let mut cpi = CpiMatrix::from_marks(g, 200, &[(0, 101), (1, 100), (1, 104), (2, 102)]).unwrap();
        let mut traj = Trajectory::new(1, (101, 40), vec![]);
        traj.points = band_search(&mut cpi, (101, 40), 10.0, BandMode::Full);
        assert_eq!(intersection_point(&[(101, 40), (102, 60)], 50).unwrap(), 101.5);
        prune_trajectory(&mut traj, &mut cpi, &mut rng());
        assert_eq!(traj.points, vec![(101, 40), (100, 50), (102, 60)]);
        assert!(cpi.is_free(1, 104));
        assert!(cpi.is_frozen(1, 100));
    }

    #[test]
    fn prune_without_duplicates_is_identity() {
        let mut cpi = CpiMatrix::from_marks(vec![10, 20], 50, &[(0, 5), (1, 6)]).unwrap();
        let mut traj = Trajectory::new(1, (5, 10), band_search(&mut cpi, (5, 10), 3.0, BandMode::Full));
        let before = traj.clone();
        prune_trajectory(&mut traj, &mut cpi, &mut rng());
        assert_eq!(traj, before);
    }

    #[test]
    fn prune_ties_pick_one_of_the_tied() {
        for s in 0..8 {
            let mut cpi = CpiMatrix::from_marks(vec![10, 20], 50, &[(1, 20), (1, 24)]).unwrap();
            let mut traj = Trajectory::new(1, (22, 20), band_search(&mut cpi, (22, 20), 5.0, BandMode::Full));
            prune_trajectory(&mut traj, &mut cpi, &mut ChaCha8Rng::seed_from_u64(s));
            assert_eq!(traj.len(), 1);
            let i = traj.points[0].0;
            assert!(i == 20 || i == 24);
            assert!(cpi.is_free(1, 44 - i));
        }
    }

    fn column(g: &[usize], i: usize) -> Vec<(usize, usize)> {
        (0..g.len()).map(|l| (l, i)).collect()
    }

    #[test]
    fn vertical_column_is_one_trajectory() {
        let g: Vec<usize> = (30..=80).step_by(2).collect();
        let mut cpi = CpiMatrix::from_marks(g.clone(), 800, &column(&g, 300)).unwrap();
        let rule = BandRule { min_block_len: 15 };
        let trajs = identify_trajectories(&mut cpi, (0.1, 0.5), rule, &mut rng());
        assert_eq!(trajs.len(), 1);
        assert_eq!(trajs[0].len(), g.len());
        assert_eq!(trajs[0].batch, 1);
    }

    #[test]
    fn singleton_seed() {
        let mut cpi = CpiMatrix::from_marks(vec![10, 20, 30], 300, &[(1, 100), (0, 200)]).unwrap();
        let trajs = coarse_search(&mut cpi, &[(100, 20)], BandRule { min_block_len: 15 }, 1, &mut rng());
        assert_eq!(trajs.len(), 1);
        assert_eq!(trajs[0].points, vec![(100, 20)]);
        assert!(cpi.is_free(0, 200));
    }

    #[test]
    fn columns_and_strays() {
        let g: Vec<usize> = (30..=60).step_by(5).collect();
        let mut marks = Vec::new();
        for (l, _) in g.iter().enumerate() {
            marks.push((l, 200 + l % 3));
            marks.push((l, 500 - l % 2));
        }
        marks.push((3, 350));
        marks.push((6, 700));
        let mut cpi = CpiMatrix::from_marks(g.clone(), 800, &marks).unwrap();
        let rule = BandRule { min_block_len: 15 };
        let seeds = select_seeds(&cpi, (30.0, 30.0));
        let trajs = coarse_search(&mut cpi, &seeds, rule, 1, &mut rng());
        assert_eq!(trajs.len(), 2);
        assert!(trajs.iter().all(|t| t.len() == g.len()));
        // brute force: strays are outside every band around trajectory points
        for &(l, i) in &[(3usize, 350usize), (6, 700)] {
            assert!(cpi.is_free(l, i));
            for t in &trajs {
                assert!(t.points.iter().all(|&(j, bw)| (j as f64 - i as f64).abs() > rule.half_band(bw)));
            }
        }
        let rest = identify_trajectories(&mut cpi, (0.1, 0.5), rule, &mut rng());
        assert_eq!(rest.len(), 2);
        assert!(rest.iter().all(|t| t.len() == 1));
    }

    #[test]
    fn refinement_absorbs_close_marks_only() {
        let g = vec![10, 20, 30, 40];
        let mut cpi =
            CpiMatrix::from_marks(g, 300, &[(0, 100), (1, 100), (2, 104), (3, 106), (3, 140)]).unwrap();
        let mut trajs = vec![Trajectory::new(
            1,
            (100, 10),
            band_search(&mut cpi, (100, 10), 0.0, BandMode::Full),
        )];
        assert_eq!(trajs[0].len(), 2);
        refine_trajectories(&mut trajs, &mut cpi, 4, &mut rng());
        // 104 is within 4 of 100 at a higher row, then 106 within 4 of 104
        assert_eq!(trajs[0].points, vec![(100, 10), (100, 20), (104, 30), (106, 40)]);
        assert!(cpi.is_free(3, 140));
        // δ + 1 away is never absorbed
        let mut cpi = CpiMatrix::from_marks(vec![10, 20], 300, &[(0, 100), (1, 105)]).unwrap();
        let mut trajs = vec![Trajectory::new(1, (100, 10), band_search(&mut cpi, (100, 10), 0.0, BandMode::Full))];
        refine_trajectories(&mut trajs, &mut cpi, 4, &mut rng());
        assert_eq!(trajs[0].len(), 1);
    }

    #[test]
    fn empty_cpi_gives_no_batches() {
        let mut cpi = CpiMatrix::new(vec![10, 20], 100).unwrap();
        assert!(identify_trajectories(&mut cpi, (0.1, 0.5), BandRule { min_block_len: 15 }, &mut rng()).is_empty());
    }

    #[test]
    fn band_rule() {
        let r = BandRule { min_block_len: 15 };
        assert_eq!(r.half_band(20), 10.0);
        assert_eq!(r.half_band(80), 15.0);
        assert_eq!(r.neighbor_delta(80), 8);
        assert_eq!(r.neighbor_delta(20), 5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn every_mark_ends_in_exactly_one_trajectory(
            raw in proptest::collection::vec((0usize..8, 1usize..300), 0..80),
            seed in 0u64..1000,
        ) {
            let g: Vec<usize> = (20..=48).step_by(4).collect();
            let mut cpi = CpiMatrix::from_marks(g, 300, &raw).unwrap();
            let total = cpi.mark_count();
            let trajs = identify_trajectories(
                &mut cpi, (0.1, 0.5), BandRule { min_block_len: 15 }, &mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert!(!cpi.any_free());
            let mut seen: Vec<(usize, usize)> = trajs.iter().flat_map(|t| t.points.clone()).collect();
            prop_assert_eq!(seen.len(), total);
            seen.sort_unstable();
            seen.dedup();
            prop_assert_eq!(seen.len(), total);
            for t in &trajs {
                prop_assert!(!t.is_empty());
                let mut gs: Vec<usize> = t.points.iter().map(|p| p.1).collect();
                gs.sort_unstable();
                let len = gs.len();
                gs.dedup();
                prop_assert_eq!(gs.len(), len);
                for &(i, bw) in &t.points {
                    prop_assert!(cpi.is_frozen(cpi.row_of(bw).unwrap(), i));
                }
            }
        }
    }
}
