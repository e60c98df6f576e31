//! Static k-d tree over fixed-dimension points.
//!
//! Distances are squared Euclidean from [`squared_distance`]; equal distances
//! resolve to the lowest original index, matching a brute-force scan in
//! ascending index order.

use crate::descriptors::squared_distance;
use crate::geometry::Vec3;

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

#[derive(Debug, Clone)]
pub struct KdTree {
    dim: usize,
    // Coordinates in tree order.
    coords: Vec<f64>,
    ids: Vec<usize>,
    nodes: Vec<Node>,
}

impl KdTree {
    /// Builds over rows of `data` (row-major, `dim` columns) whose index is in `ids`.
    pub fn with_ids(dim: usize, data: &[f64], ids: impl IntoIterator<Item = usize>) -> Self {
        assert!(dim > 0, "k-d tree dimension must be positive");
        let mut ids: Vec<usize> = ids.into_iter().collect();
        let mut nodes = Vec::new();
        if !ids.is_empty() {
            let n = ids.len();
            build(dim, data, &mut ids, 0, n, &mut nodes);
        }
        let mut coords = Vec::with_capacity(ids.len() * dim);
        for &id in &ids {
            coords.extend_from_slice(&data[id * dim..(id + 1) * dim]);
        }
        Self {
            dim,
            coords,
            ids,
            nodes,
        }
    }

    pub fn new(dim: usize, data: &[f64]) -> Self {
        Self::with_ids(dim, data, 0..data.len() / dim)
    }

    pub fn from_points(points: &[Vec3]) -> Self {
        let data: Vec<f64> = points.iter().flat_map(|p| [p.x, p.y, p.z]).collect();
        Self::new(3, &data)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn item(&self, slot: usize) -> &[f64] {
        &self.coords[slot * self.dim..(slot + 1) * self.dim]
    }

    /// Nearest item as `(index, squared distance)`.
    pub fn nearest(&self, query: &[f64]) -> Option<(usize, f64)> {
        debug_assert_eq!(query.len(), self.dim);
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = (f64::INFINITY, usize::MAX);
        self.nearest_rec(0, query, &mut best);
        Some((best.1, best.0))
    }

    fn nearest_rec(&self, node: usize, q: &[f64], best: &mut (f64, usize)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for slot in start..end {
                    let d2 = squared_distance(q, self.item(slot));
                    let id = self.ids[slot];
                    if d2 < best.0 || (d2 == best.0 && id < best.1) {
                        *best = (d2, id);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.nearest_rec(near, q, best);
                if diff * diff <= best.0 {
                    self.nearest_rec(far, q, best);
                }
            }
        }
    }

    pub fn nearest_point(&self, p: &Vec3) -> Option<(usize, f64)> {
        self.nearest(&[p.x, p.y, p.z])
    }

    /// The `k` nearest items sorted by `(squared distance, index)`.
    pub fn knn(&self, query: &[f64], k: usize) -> Vec<(usize, f64)> {
        debug_assert_eq!(query.len(), self.dim);
        let mut heap: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        if k > 0 && !self.nodes.is_empty() {
            self.knn_rec(0, query, k, &mut heap);
        }
        heap.into_iter().map(|(d2, id)| (id, d2)).collect()
    }

    fn knn_rec(&self, node: usize, q: &[f64], k: usize, best: &mut Vec<(f64, usize)>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for slot in start..end {
                    let cand = (squared_distance(q, self.item(slot)), self.ids[slot]);
                    if best.len() == k {
                        let worst = best[k - 1];
                        if !(cand.0 < worst.0 || (cand.0 == worst.0 && cand.1 < worst.1)) {
                            continue;
                        }
                    }
                    let pos = best.partition_point(|&(d, i)| d < cand.0 || (d == cand.0 && i < cand.1));
                    best.insert(pos, cand);
                    best.truncate(k);
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.knn_rec(near, q, k, best);
                if best.len() < k || diff * diff <= best[best.len() - 1].0 {
                    self.knn_rec(far, q, k, best);
                }
            }
        }
    }

    pub fn knn_point(&self, p: &Vec3, k: usize) -> Vec<(usize, f64)> {
        self.knn(&[p.x, p.y, p.z], k)
    }

    /// Indices with squared distance `<= radius^2`, ascending by index.
    pub fn within_radius(&self, query: &[f64], radius: f64) -> Vec<usize> {
        let r2 = radius * radius;
        let mut out = Vec::new();
        if !self.nodes.is_empty() {
            self.radius_rec(0, query, r2, &mut out);
        }
        out.sort_unstable();
        out
    }

    fn radius_rec(&self, node: usize, q: &[f64], r2: f64, out: &mut Vec<usize>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for slot in start..end {
                    if squared_distance(q, self.item(slot)) <= r2 {
                        out.push(self.ids[slot]);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.radius_rec(near, q, r2, out);
                if diff * diff <= r2 {
                    self.radius_rec(far, q, r2, out);
                }
            }
        }
    }

    pub fn within_radius_point(&self, p: &Vec3, radius: f64) -> Vec<usize> {
        self.within_radius(&[p.x, p.y, p.z], radius)
    }
}

fn build(dim: usize, data: &[f64], ids: &mut [usize], start: usize, end: usize, nodes: &mut Vec<Node>) -> usize {
    let me = nodes.len();
    if end - start <= LEAF_SIZE {
        nodes.push(Node::Leaf { start, end });
        return me;
    }
    let coord = |id: usize, axis: usize| data[id * dim + axis];
    // split on the widest axis
    let mut axis = 0;
    let mut widest = -1.0;
    for a in 0..dim {
        let (lo, hi) = ids[start..end]
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &id| {
                let v = coord(id, a);
                (lo.min(v), hi.max(v))
            });
        if hi - lo > widest {
            widest = hi - lo;
            axis = a;
        }
    }
    if widest <= 0.0 {
        nodes.push(Node::Leaf { start, end });
        return me;
    }
    let mid = start + (end - start) / 2;
    ids[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
        coord(a, axis).total_cmp(&coord(b, axis)).then(a.cmp(&b))
    });
    let value = coord(ids[mid], axis);
    nodes.push(Node::Leaf { start, end });
    let left = build(dim, data, ids, start, mid, nodes);
    let right = build(dim, data, ids, mid, end, nodes);
    nodes[me] = Node::Split {
        axis,
        value,
        left,
        right,
    };
    me
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_nearest(dim: usize, data: &[f64], q: &[f64]) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        for i in 0..data.len() / dim {
            let d2 = squared_distance(q, &data[i * dim..(i + 1) * dim]);
            if d2 < best.1 {
                best = (i, d2);
            }
        }
        best
    }

    #[test]
    fn nearest_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for dim in [1, 3, 8, 16] {
            let data: Vec<f64> = (0..500 * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let tree = KdTree::new(dim, &data);
            for _ in 0..200 {
                let q: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.2..1.2)).collect();
                assert_eq!(tree.nearest(&q).unwrap(), brute_nearest(dim, &data, &q));
            }
        }
    }

    #[test]
    fn ties_resolve_to_lowest_index() {
        // many duplicates on a coarse lattice
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let data: Vec<f64> = (0..600).map(|_| rng.random_range(0..4) as f64).collect();
        let tree = KdTree::new(3, &data);
        for _ in 0..100 {
            let q: Vec<f64> = (0..3).map(|_| rng.random_range(0..4) as f64 + 0.5).collect();
            assert_eq!(tree.nearest(&q).unwrap(), brute_nearest(3, &data, &q));
        }
    }

    #[test]
    fn knn_and_radius_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let data: Vec<f64> = (0..900).map(|_| rng.random_range(-1.0..1.0)).collect();
        let tree = KdTree::new(3, &data);
        for _ in 0..50 {
            let q: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut all: Vec<(usize, f64)> = (0..300)
                .map(|i| (i, squared_distance(&q, &data[i * 3..i * 3 + 3])))
                .collect();
            all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            assert_eq!(tree.knn(&q, 7), all[..7].to_vec());
            let r = 0.4;
            let mut inside: Vec<usize> = all.iter().filter(|e| e.1 <= r * r).map(|e| e.0).collect();
            inside.sort_unstable();
            assert_eq!(tree.within_radius(&q, r), inside);
        }
    }

    #[test]
    fn subset_ids_are_reported() {
        let data = vec![0.0, 1.0, 2.0, 3.0];
        let tree = KdTree::with_ids(1, &data, [1, 3]);
        assert_eq!(tree.nearest(&[0.0]), Some((1, 1.0)));
        assert_eq!(tree.len(), 2);
        assert!(KdTree::with_ids(1, &data, []).nearest(&[0.0]).is_none());
    }
}
