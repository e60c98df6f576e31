#![allow(dead_code)]

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sgp_core::descriptors::DescriptorSet;
use sgp_core::fpfh::{feature_bins, pair_features, FpfhDescriptor, BINS_PER_FEATURE, FPFH_DIM};
use sgp_core::geometry::{axis_angle_matrix, PointCloud, RigidTransform};
use sgp_core::matching::Correspondence;

pub type V = Vector3<f64>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_unit(rng: &mut impl Rng) -> V {
    loop {
        let v = V::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

pub fn random_rotation(rng: &mut impl Rng) -> Matrix3<f64> {
    axis_angle_matrix(random_unit(rng), rng.random_range(-std::f64::consts::PI..std::f64::consts::PI))
}

pub fn random_transform(rng: &mut impl Rng, max_t: f64) -> RigidTransform {
    RigidTransform {
        rotation: random_rotation(rng),
        translation: V::new(rng.random_range(-max_t..max_t), rng.random_range(-max_t..max_t), rng.random_range(-max_t..max_t)),
    }
}

pub fn random_points(rng: &mut impl Rng, n: usize, half: f64) -> Vec<V> {
    (0..n)
        .map(|_| V::new(rng.random_range(-half..half), rng.random_range(-half..half), rng.random_range(-half..half)))
        .collect()
}

/// Points on a wavy sheet with random unit normals perturbed around the sheet normal.
pub fn random_oriented_cloud(rng: &mut impl Rng, n: usize) -> PointCloud {
    let mut points = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = rng.random_range(-0.5..0.5);
        let y: f64 = rng.random_range(-0.5..0.5);
        points.push(V::new(x, y, 0.1 * (4.0 * x).sin() * (3.0 * y).cos() + rng.random_range(-0.01..0.01)));
        normals.push((V::z() + 0.3 * random_unit(rng)).normalize());
    }
    PointCloud {
        points,
        normals: Some(normals),
        descriptors: None,
    }
}

/// FPFH by exhaustive neighbor search, following the textbook definition.
pub fn fpfh_oracle(cloud: &PointCloud, radius: f64) -> Vec<FpfhDescriptor> {
    let pts = &cloud.points;
    let nrm = cloud.normals.as_ref().unwrap();
    let n = pts.len();
    let neighbors: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i)
                .map(|j| (j, (pts[j] - pts[i]).norm_squared()))
                .filter(|&(_, d2)| d2 > 0.0 && d2 <= radius * radius)
                .map(|(j, d2)| (j, d2.sqrt()))
                .collect()
        })
        .collect();
    let spfh: Vec<[f64; FPFH_DIM]> = (0..n)
        .map(|i| {
            let mut h = [0.0; FPFH_DIM];
            for &(j, _) in &neighbors[i] {
                if let Some((a, f, t)) = pair_features(&pts[i], &nrm[i], &pts[j], &nrm[j]) {
                    let b = feature_bins(a, f, t);
                    for (k, bin) in b.iter().enumerate() {
                        h[k * BINS_PER_FEATURE + bin] += 100.0 / neighbors[i].len() as f64;
                    }
                }
            }
            h
        })
        .collect();
    (0..n)
        .map(|i| {
            let nb = &neighbors[i];
            if nb.is_empty() {
                return FpfhDescriptor::ZERO;
            }
            let mut h = spfh[i];
            for &(j, d) in nb {
                for b in 0..FPFH_DIM {
                    h[b] += spfh[j][b] / d / nb.len() as f64;
                }
            }
            for sub in h.chunks_mut(BINS_PER_FEATURE) {
                let s: f64 = sub.iter().sum();
                if s > 0.0 {
                    sub.iter_mut().for_each(|v| *v *= 100.0 / s);
                }
            }
            FpfhDescriptor { histogram: h }
        })
        .collect()
}

/// Nearest valid row of `b` for each valid row of `a`, lowest index on ties.
pub fn match_nn_oracle(a: &DescriptorSet, b: &DescriptorSet) -> Vec<Correspondence> {
    let mut out = Vec::new();
    for i in (0..a.len()).filter(|&i| a.is_valid(i)) {
        let mut best: Option<(usize, f64)> = None;
        for j in (0..b.len()).filter(|&j| b.is_valid(j)) {
            let d2: f64 = a.row(i).iter().zip(b.row(j)).map(|(x, y)| (x - y) * (x - y)).sum();
            if best.is_none_or(|(_, bd)| d2 < bd) {
                best = Some((j, d2));
            }
        }
        if let Some((j, d2)) = best {
            out.push(Correspondence {
                index_a: i,
                index_b: j,
                feature_distance: d2.sqrt(),
            });
        }
    }
    out
}

pub fn overlap_oracle(t: &RigidTransform, a: &PointCloud, b: &PointCloud, tau: f64) -> f64 {
    let hits = a
        .points
        .iter()
        .filter(|p| {
            let q = t.rotation * *p + t.translation;
            b.points.iter().any(|r| (r - q).norm() <= tau)
        })
        .count();
    hits as f64 / a.len() as f64
}

/// Anchor/positive pairs a training batch must contain when no cap applies.
pub fn anchor_oracle(label: &RigidTransform, a: &[V], b: &[V], c_bar: f64) -> Vec<(usize, usize)> {
    a.iter()
        .enumerate()
        .filter_map(|(i, p)| {
            let q = label.rotation * p + label.translation;
            let (j, d2) = b
                .iter()
                .enumerate()
                .map(|(j, r)| (j, (r - q).norm_squared()))
                .fold((usize::MAX, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
            (d2 < c_bar * c_bar).then_some((i, j))
        })
        .collect()
}

pub fn random_descriptor_set(rng: &mut impl Rng, n: usize, dim: usize, levels: u32) -> DescriptorSet {
    // coarse quantization makes exact ties common
    let data: Vec<f64> = (0..n * dim).map(|_| rng.random_range(0..levels) as f64).collect();
    DescriptorSet::new(dim, data).unwrap()
}
