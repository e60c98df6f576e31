//! Descriptor-space correspondences: nearest neighbor, cross check, ratio test.

use rayon::prelude::*;

use crate::descriptors::{squared_distance, DescriptorSet};
use crate::error::{Result, SgpError};
use crate::kdtree::KdTree;

/// Descriptor dimensions above this use brute force instead of a k-d tree.
pub const KDTREE_MAX_DIM: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub index_a: usize,
    pub index_b: usize,
    pub feature_distance: f64,
}

enum Searcher<'a> {
    Tree(KdTree),
    Brute(&'a DescriptorSet),
}

impl<'a> Searcher<'a> {
    fn new(set: &'a DescriptorSet) -> Self {
        if set.dim() <= KDTREE_MAX_DIM {
            let ids = (0..set.len()).filter(|&i| set.is_valid(i));
            Searcher::Tree(KdTree::with_ids(set.dim(), set.as_flat(), ids))
        } else {
            Searcher::Brute(set)
        }
    }

    fn nearest(&self, q: &[f64]) -> Option<(usize, f64)> {
        match self {
            Searcher::Tree(t) => t.nearest(q),
            Searcher::Brute(set) => brute_knn(set, q, 1).into_iter().next(),
        }
    }

    fn two_nearest(&self, q: &[f64]) -> Vec<(usize, f64)> {
        match self {
            Searcher::Tree(t) => t.knn(q, 2),
            Searcher::Brute(set) => brute_knn(set, q, 2),
        }
    }
}

fn brute_knn(set: &DescriptorSet, q: &[f64], k: usize) -> Vec<(usize, f64)> {
    let mut best: Vec<(usize, f64)> = Vec::with_capacity(k + 1);
    for j in 0..set.len() {
        if !set.is_valid(j) {
            continue;
        }
        let d2 = squared_distance(q, set.row(j));
        if best.len() == k && d2 >= best[k - 1].1 {
            continue;
        }
        // strict comparison keeps the earlier (lower) index on ties
        let pos = best.partition_point(|&(_, d)| d <= d2);
        best.insert(pos, (j, d2));
        best.truncate(k);
    }
    best
}

fn check_dims(a: &DescriptorSet, b: &DescriptorSet) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(SgpError::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    if a.is_empty() || b.is_empty() {
        return Err(SgpError::invalid("descriptor lists must be nonempty"));
    }
    Ok(())
}

/// One correspondence per valid row of `a`: its nearest valid row of `b`,
/// ties broken toward the lowest index.
pub fn match_nn(desc_a: &DescriptorSet, desc_b: &DescriptorSet) -> Result<Vec<Correspondence>> {
    check_dims(desc_a, desc_b)?;
    let searcher = Searcher::new(desc_b);
    Ok((0..desc_a.len())
        .into_par_iter()
        .filter(|&i| desc_a.is_valid(i))
        .filter_map(|i| {
            searcher.nearest(desc_a.row(i)).map(|(j, d2)| Correspondence {
                index_a: i,
                index_b: j,
                feature_distance: d2.sqrt(),
            })
        })
        .collect())
}

/// Keeps `(k, j)` from `matches_ab` when `matches_ba` maps `j` back to `k`.
pub fn cross_check(matches_ab: &[Correspondence], matches_ba: &[Correspondence]) -> Vec<Correspondence> {
    let max_b = matches_ba.iter().map(|c| c.index_a + 1).max().unwrap_or(0);
    let mut back = vec![usize::MAX; max_b];
    for c in matches_ba {
        back[c.index_a] = c.index_b;
    }
    matches_ab
        .iter()
        .filter(|c| back.get(c.index_b).is_some_and(|&k| k == c.index_a))
        .copied()
        .collect()
}

/// Mutual nearest neighbors between two descriptor sets.
pub fn mutual_matches(desc_a: &DescriptorSet, desc_b: &DescriptorSet) -> Result<Vec<Correspondence>> {
    let ab = match_nn(desc_a, desc_b)?;
    let ba = match_nn(desc_b, desc_a)?;
    Ok(cross_check(&ab, &ba))
}

/// Nearest-neighbor matches whose nearest/second-nearest distance ratio is below `zeta`.
pub fn ratio_test(desc_a: &DescriptorSet, desc_b: &DescriptorSet, zeta: f64) -> Result<Vec<Correspondence>> {
    if !(zeta > 0.0 && zeta < 1.0) {
        return Err(SgpError::invalid(format!("ratio threshold must lie in (0, 1), got {zeta}")));
    }
    check_dims(desc_a, desc_b)?;
    if desc_b.valid_count() < 2 {
        return Err(SgpError::invalid("ratio test needs at least two candidates"));
    }
    let searcher = Searcher::new(desc_b);
    Ok((0..desc_a.len())
        .into_par_iter()
        .filter(|&i| desc_a.is_valid(i))
        .filter_map(|i| {
            let two = searcher.two_nearest(desc_a.row(i));
            let (j, d1) = (two[0].0, two[0].1.sqrt());
            let d2 = two[1].1.sqrt();
            let keep = if d2 == 0.0 { false } else { d1 / d2 < zeta };
            keep.then_some(Correspondence {
                index_a: i,
                index_b: j,
                feature_distance: d1,
            })
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn set(rows: &[&[f64]]) -> DescriptorSet {
        DescriptorSet::from_rows(rows).unwrap()
    }

    fn random_set(rng: &mut impl Rng, n: usize, dim: usize) -> DescriptorSet {
        DescriptorSet::new(dim, (0..n * dim).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn identical_lists_self_match() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for dim in [4, 33] {
            let a = random_set(&mut rng, 50, dim);
            let m = match_nn(&a, &a).unwrap();
            for (k, c) in m.iter().enumerate() {
                assert_eq!((c.index_a, c.index_b, c.feature_distance), (k, k, 0.0));
            }
            assert_eq!(mutual_matches(&a, &a).unwrap().len(), 50);
        }
    }

    #[test]
    fn one_dimensional_argmin() {
        let m = match_nn(&set(&[&[0.0]]), &set(&[&[3.0], &[1.0], &[2.0]])).unwrap();
        assert_eq!(m, vec![Correspondence { index_a: 0, index_b: 1, feature_distance: 1.0 }]);
    }

    #[test]
    fn ties_pick_lowest_index() {
        let m = match_nn(&set(&[&[0.0]]), &set(&[&[1.0], &[-1.0], &[1.0]])).unwrap();
        assert_eq!(m[0].index_b, 0);
        let wide: Vec<f64> = vec![0.0; 20];
        let mut one = wide.clone();
        one[3] = 1.0;
        let mut other = wide.clone();
        other[7] = -1.0;
        let m = match_nn(&set(&[&wide]), &set(&[&[5.0; 20], &other, &one])).unwrap();
        assert_eq!(m[0].index_b, 1);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        assert!(matches!(
            match_nn(&set(&[&[0.0]]), &set(&[&[0.0, 1.0]])),
            Err(SgpError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn excluded_rows_never_match() {
        let a = set(&[&[0.0, 0.0], &[1.0, 1.0]]).with_zero_rows_excluded();
        let b = set(&[&[0.0, 0.0], &[0.9, 1.0]]).with_zero_rows_excluded();
        let m = match_nn(&a, &b).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!((m[0].index_a, m[0].index_b), (1, 1));
    }

    #[test]
    fn hand_enumerated_cross_check() {
        let a = set(&[&[0.0], &[10.0]]);
        let b = set(&[&[0.1], &[9.9], &[0.2]]);
        let ab = match_nn(&a, &b).unwrap();
        let ba = match_nn(&b, &a).unwrap();
        let pairs = |v: &[Correspondence]| v.iter().map(|c| (c.index_a, c.index_b)).collect::<Vec<_>>();
        assert_eq!(pairs(&ab), vec![(0, 0), (1, 1)]);
        assert_eq!(pairs(&ba), vec![(0, 0), (1, 1), (2, 0)]);
        assert_eq!(pairs(&cross_check(&ab, &ba)), vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn cross_check_survivors_are_mutual_and_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let a = random_set(&mut rng, 120, 6);
        let b = random_set(&mut rng, 150, 6);
        let ab = match_nn(&a, &b).unwrap();
        let ba = match_nn(&b, &a).unwrap();
        let cc = cross_check(&ab, &ba);
        for c in &cc {
            assert!(ab.contains(c));
            assert_eq!(ba.iter().find(|r| r.index_a == c.index_b).unwrap().index_b, c.index_a);
        }
        assert_eq!(cross_check(&cc, &ba), cc);
    }

    #[test]
    fn ratio_test_cases() {
        let kept = ratio_test(&set(&[&[0.0]]), &set(&[&[0.0], &[1.0]]), 0.1).unwrap();
        assert_eq!(kept.len(), 1);
        let rejected = ratio_test(&set(&[&[0.0]]), &set(&[&[1.0], &[1.1]]), 0.75).unwrap();
        assert!(rejected.is_empty());
        assert!(ratio_test(&set(&[&[0.0]]), &set(&[&[1.0], &[1.1]]), 1.0).is_err());
        assert!(ratio_test(&set(&[&[0.0]]), &set(&[&[1.0], &[1.1]]), 0.0).is_err());
        assert!(ratio_test(&set(&[&[0.0]]), &set(&[&[1.0]]), 0.5).is_err());
    }

    #[test]
    fn ratio_test_is_subset_of_nn() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for dim in [3, 33] {
            let a = random_set(&mut rng, 80, dim);
            let b = random_set(&mut rng, 90, dim);
            let nn = match_nn(&a, &b).unwrap();
            for c in ratio_test(&a, &b, 0.8).unwrap() {
                assert!(nn.contains(&c));
            }
        }
    }

    #[test]
    fn permuting_b_permutes_result() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let a = random_set(&mut rng, 60, 8);
        let b = random_set(&mut rng, 70, 8);
        let perm: Vec<usize> = (0..70).rev().collect();
        let rows: Vec<Vec<f64>> = perm.iter().map(|&j| b.row(j).to_vec()).collect();
        let bp = DescriptorSet::from_rows(&rows).unwrap();
        let m = match_nn(&a, &b).unwrap();
        let mp = match_nn(&a, &bp).unwrap();
        for (x, y) in m.iter().zip(&mp) {
            assert_eq!(x.index_b, perm[y.index_b]);
            assert_eq!(x.feature_distance, y.feature_distance);
        }
    }
}
