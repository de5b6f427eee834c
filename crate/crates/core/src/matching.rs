//! Nearest-neighbour descriptor matching and matching accuracy.

use alloc::vec;
use alloc::vec::Vec;

use crate::geometry::Homography;
use crate::keypoints::KeypointSet;
use crate::linalg::sgemm_nt;
use crate::math;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum MatchPolicy {
    Nn,
    #[default]
    MutualNn,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Match {
    pub a: usize,
    pub b: usize,
    /// Euclidean descriptor distance.
    pub distance: f32,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct MatchSet {
    pub matches: Vec<Match>,
}

impl MatchSet {
    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }
}

/// Rows of `a` per distance block; bounds the scratch matrix.
const BLOCK: usize = 256;

/// Per-row `(index, squared distance)` of the nearest neighbour.
pub type Nearest = Vec<(usize, f32)>;

/// For each row of `a` `[n, dim]` the closest row of `b` `[m, dim]`, and for
/// each row of `b` the closest row of `a`, as (index, squared distance).
/// Ties go to the lower index.
pub fn nearest_neighbors(a: &[f32], b: &[f32], dim: usize) -> (Nearest, Nearest) {
    let (n, m) = (a.len() / dim.max(1), b.len() / dim.max(1));
    if n == 0 || m == 0 || dim == 0 {
        return (vec![(0, 0.0); if m == 0 { 0 } else { n }], vec![(0, 0.0); if n == 0 { 0 } else { m }]);
    }
    let sq = |v: &[f32]| v.chunks_exact(dim).map(|r| r.iter().map(|x| x * x).sum::<f32>()).collect::<Vec<_>>();
    let (na, nb) = (sq(a), sq(b));
    let mut row_best = vec![(0usize, f32::INFINITY); n];
    let mut col_best = vec![(0usize, f32::INFINITY); m];
    let mut dots = vec![0.0f32; BLOCK.min(n) * m];
    for start in (0..n).step_by(BLOCK) {
        let rows = BLOCK.min(n - start);
        sgemm_nt(rows, dim, m, &a[start * dim..(start + rows) * dim], b, &mut dots[..rows * m]);
        for r in 0..rows {
            let i = start + r;
            let line = &dots[r * m..(r + 1) * m];
            let mut best = (0usize, f32::INFINITY);
            for (j, &dot) in line.iter().enumerate() {
                let d = (na[i] + nb[j] - 2.0 * dot).max(0.0);
                if d < best.1 {
                    best = (j, d);
                }
                if d < col_best[j].1 {
                    col_best[j] = (i, d);
                }
            }
            row_best[i] = best;
        }
    }
    (row_best, col_best)
}

/// Matches descriptors of `a` against `b`. Empty inputs give no matches.
pub fn match_descriptors(a: &KeypointSet, b: &KeypointSet, policy: MatchPolicy) -> MatchSet {
    if a.is_empty() || b.is_empty() || a.dim != b.dim {
        return MatchSet::default();
    }
    let (ab, ba) = nearest_neighbors(&a.descriptors, &b.descriptors, a.dim);
    let matches = ab
        .iter()
        .enumerate()
        .filter(|&(i, &(j, _))| policy == MatchPolicy::Nn || ba[j].0 == i)
        .map(|(i, &(j, _))| {
            // the expanded form loses digits on close pairs; recompute directly
            let d2: f64 =
                a.descriptor(i).iter().zip(b.descriptor(j)).map(|(x, y)| *x as f64 - *y as f64).map(|d| d * d).sum();
            Match { a: i, b: j, distance: math::sqrt(d2) as f32 }
        })
        .collect();
    MatchSet { matches }
}

/// Pixel thresholds `1..=10`.
pub const MMA_THRESHOLDS: [f64; 10] = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];

/// Matching accuracy of one pair.
#[derive(Clone, Debug, PartialEq)]
pub struct MmaReport {
    pub thresholds: Vec<f64>,
    /// Correct matches per threshold.
    pub correct: Vec<usize>,
    pub total: usize,
    /// Seconds spent matching, when the caller measured it.
    pub elapsed: Option<f64>,
}

impl MmaReport {
    /// Fraction correct per threshold, all zero when there were no matches.
    pub fn fractions(&self) -> Vec<f64> {
        self.correct.iter().map(|&c| if self.total == 0 { 0.0 } else { c as f64 / self.total as f64 }).collect()
    }

    /// Fraction at the largest threshold not above `t`.
    pub fn at(&self, t: f64) -> f64 {
        let f = self.fractions();
        self.thresholds.iter().rposition(|&x| x <= t).map_or(0.0, |i| f[i])
    }

    pub fn no_matches(&self) -> bool {
        self.total == 0
    }
}

/// A match is correct at `t` when `h` maps its point in `a` within `t`
/// pixels of its point in `b`.
pub fn mma(matches: &MatchSet, a: &KeypointSet, b: &KeypointSet, h: &Homography, thresholds: &[f64]) -> MmaReport {
    let errors: Vec<f64> = matches
        .matches
        .iter()
        .map(|m| {
            let (pa, pb) = (a.keypoints[m.a], b.keypoints[m.b]);
            match h.apply((pa.x as f64, pa.y as f64)) {
                Ok((x, y)) => math::sqrt((x - pb.x as f64) * (x - pb.x as f64) + (y - pb.y as f64) * (y - pb.y as f64)),
                Err(_) => f64::INFINITY,
            }
        })
        .collect();
    let correct = thresholds.iter().map(|&t| errors.iter().filter(|&&e| e <= t).count()).collect();
    MmaReport { thresholds: thresholds.to_vec(), correct, total: errors.len(), elapsed: None }
}

/// Per-threshold fractions averaged over pairs.
pub fn mean_mma(reports: &[MmaReport]) -> Vec<f64> {
    let Some(first) = reports.first() else {
        return Vec::new();
    };
    let mut acc = vec![0.0; first.thresholds.len()];
    for r in reports {
        acc.iter_mut().zip(r.fractions()).for_each(|(s, f)| *s += f);
    }
    acc.iter().map(|s| s / reports.len() as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keypoints::Keypoint;

    fn set(points: &[(f32, f32)], desc: &[[f32; 2]]) -> KeypointSet {
        KeypointSet {
            keypoints: points.iter().map(|&(x, y)| Keypoint { x, y, scale: 1.0, score: 1.0 }).collect(),
            dim: 2,
            descriptors: desc.iter().flatten().copied().collect(),
        }
    }

    #[test]
    fn identity_pairing() {
        let s = set(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)], &[[1.0, 0.0], [0.0, 1.0], [0.6, 0.8]]);
        let m = match_descriptors(&s, &s, MatchPolicy::MutualNn);
        assert_eq!(m.matches.iter().map(|m| (m.a, m.b)).collect::<Vec<_>>(), [(0, 0), (1, 1), (2, 2)]);
        let r = mma(&m, &s, &s, &Homography::identity(), &MMA_THRESHOLDS);
        assert!(r.fractions().iter().all(|&f| f == 1.0));
    }

    #[test]
    fn single_elements_always_match() {
        let a = set(&[(0.0, 0.0)], &[[1.0, 0.0]]);
        let b = set(&[(5.0, 5.0)], &[[-1.0, 0.0]]);
        let m = match_descriptors(&a, &b, MatchPolicy::MutualNn);
        assert_eq!(m.len(), 1);
        assert!((m.matches[0].distance - 2.0).abs() < 1e-6);
    }

    #[test]
    fn ties_prefer_lower_index() {
        let a = set(&[(0.0, 0.0)], &[[1.0, 0.0]]);
        let b = set(&[(0.0, 0.0), (1.0, 1.0)], &[[0.0, 1.0], [0.0, 1.0]]);
        assert_eq!(match_descriptors(&a, &b, MatchPolicy::Nn).matches[0].b, 0);
    }

    #[test]
    fn half_correct() {
        let a = set(&[(0.0, 0.0), (10.0, 0.0), (20.0, 0.0), (30.0, 0.0)], &[[1.0, 0.0]; 4]);
        let b = set(&[(1.0, 0.0), (10.0, 2.0), (25.0, 0.0), (30.0, 9.0)], &[[1.0, 0.0]; 4]);
        let m = MatchSet { matches: (0..4).map(|i| Match { a: i, b: i, distance: 0.0 }).collect() };
        let r = mma(&m, &a, &b, &Homography::identity(), &MMA_THRESHOLDS);
        assert_eq!(r.at(3.0), 0.5);
        assert!(r.fractions().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn empty_matches_flagged() {
        let s = KeypointSet::empty(2);
        let r = mma(&match_descriptors(&s, &s, MatchPolicy::Nn), &s, &s, &Homography::identity(), &MMA_THRESHOLDS);
        assert!(r.no_matches());
        assert!(r.fractions().iter().all(|&f| f == 0.0));
    }
}
