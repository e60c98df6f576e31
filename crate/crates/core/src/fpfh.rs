//! Hand-crafted bootstrap descriptor: voxel downsampling, normal estimation
//! and 33-bin Fast Point Feature Histograms.

use std::collections::BTreeMap;

use nalgebra::SymmetricEigen;
use rayon::prelude::*;

use crate::descriptors::{squared_distance, DescriptorSet};
use crate::error::{Result, SgpError};
use crate::geometry::{Mat3, PointCloud, Vec3};
use crate::kdtree::KdTree;

pub const BINS_PER_FEATURE: usize = 11;
pub const FPFH_DIM: usize = 3 * BINS_PER_FEATURE;

/// Default parameters: 5 cm voxels, 30-neighbor normals, radius 2.5 voxels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FpfhParams {
    pub voxel_size: f64,
    pub normal_k: usize,
    pub radius: f64,
}

impl Default for FpfhParams {
    fn default() -> Self {
        Self {
            voxel_size: 0.05,
            normal_k: 30,
            radius: 0.125,
        }
    }
}

/// Three concatenated 11-bin histograms (alpha, phi, theta), each summing to
/// 100 or all-zero for a point without neighbors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FpfhDescriptor {
    pub histogram: [f64; FPFH_DIM],
}

impl FpfhDescriptor {
    pub const ZERO: Self = Self {
        histogram: [0.0; FPFH_DIM],
    };

    pub fn is_zero(&self) -> bool {
        self.histogram.iter().all(|&v| v == 0.0)
    }
}

/// One centroid per occupied voxel, in ascending voxel-key order.
///
/// Normals and descriptors of the input are dropped.
pub fn voxel_downsample(cloud: &PointCloud, voxel: f64) -> Result<PointCloud> {
    if !(voxel > 0.0) {
        return Err(SgpError::invalid(format!("voxel size must be positive, got {voxel}")));
    }
    let mut cells: BTreeMap<[i64; 3], (Vec3, usize)> = BTreeMap::new();
    for p in &cloud.points {
        let key = [
            (p.x / voxel).floor() as i64,
            (p.y / voxel).floor() as i64,
            (p.z / voxel).floor() as i64,
        ];
        let cell = cells.entry(key).or_insert((Vec3::zeros(), 0));
        cell.0 += p;
        cell.1 += 1;
    }
    Ok(PointCloud::from_points(
        cells.into_values().map(|(sum, n)| sum / n as f64).collect(),
    ))
}

#[derive(Debug, Clone)]
pub struct NormalEstimate {
    pub cloud: PointCloud,
    /// Points whose neighborhood had zero covariance; they carry normal (0,0,1).
    pub degenerate: Vec<usize>,
}

/// Smallest-eigenvalue eigenvector of each point's k-NN covariance (the
/// point itself included), oriented toward the origin viewpoint.
pub fn estimate_normals(cloud: &PointCloud, k: usize) -> Result<NormalEstimate> {
    if k < 3 {
        return Err(SgpError::invalid(format!("normal estimation needs k >= 3, got {k}")));
    }
    if cloud.len() < k {
        return Err(SgpError::invalid(format!(
            "normal estimation needs at least k={k} points, cloud has {}",
            cloud.len()
        )));
    }
    let tree = KdTree::from_points(&cloud.points);
    let results: Vec<(Vec3, bool)> = cloud
        .points
        .par_iter()
        .map(|p| {
            let nbrs = tree.knn_point(p, k);
            let mean = nbrs.iter().map(|&(i, _)| cloud.points[i]).sum::<Vec3>() / nbrs.len() as f64;
            let mut cov = Mat3::zeros();
            for &(i, _) in &nbrs {
                let d = cloud.points[i] - mean;
                cov += d * d.transpose();
            }
            cov /= nbrs.len() as f64;
            if cov.amax() <= f64::MIN_POSITIVE {
                return (Vec3::z(), true);
            }
            let eig = SymmetricEigen::new(cov);
            let (mut min_i, mut min_v) = (0, eig.eigenvalues[0]);
            for j in 1..3 {
                if eig.eigenvalues[j] < min_v {
                    min_v = eig.eigenvalues[j];
                    min_i = j;
                }
            }
            let n = eig.eigenvectors.column(min_i).normalize();
            (orient_toward_origin(n, p), false)
        })
        .collect();
    let mut degenerate = Vec::new();
    let mut normals = Vec::with_capacity(results.len());
    for (i, (n, flag)) in results.into_iter().enumerate() {
        if flag {
            degenerate.push(i);
        }
        normals.push(n);
    }
    Ok(NormalEstimate {
        cloud: PointCloud {
            points: cloud.points.clone(),
            normals: Some(normals),
            descriptors: cloud.descriptors.clone(),
        },
        degenerate,
    })
}

fn orient_toward_origin(n: Vec3, p: &Vec3) -> Vec3 {
    let s = n.dot(&(-p));
    if s > 0.0 {
        n
    } else if s < 0.0 {
        -n
    } else {
        // perpendicular to the viewing ray: prefer +z, then +y, then +x
        let key = if n.z != 0.0 {
            n.z
        } else if n.y != 0.0 {
            n.y
        } else {
            n.x
        };
        if key < 0.0 {
            -n
        } else {
            n
        }
    }
}

pub const SOURCE_TIE_EPS: f64 = 1e-9;

type V3 = [f64; 3];

#[inline]
fn v3(p: &Vec3) -> V3 {
    [p.x, p.y, p.z]
}

#[inline]
fn sub(a: V3, b: V3) -> V3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
fn dot(a: V3, b: V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
fn cross(a: V3, b: V3) -> V3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Darboux-frame angle triplet `(alpha, phi, theta)` for a source/target pair.
///
/// The source is whichever endpoint's normal makes the smaller angle with the
/// connecting line; near-ties within [`SOURCE_TIE_EPS`] radians keep `p1`, so
/// the choice does not depend on rounding. `None` when the points coincide or
/// the frame degenerates.
pub fn pair_features(p1: &Vec3, n1: &Vec3, p2: &Vec3, n2: &Vec3) -> Option<(f64, f64, f64)> {
    let (p1, n1, p2, n2) = (v3(p1), v3(n1), v3(p2), v3(n2));
    let mut dp = sub(p2, p1);
    let dist = dot(dp, dp).sqrt();
    if dist == 0.0 {
        return None;
    }
    let angle1 = dot(n1, dp) / dist;
    let angle2 = dot(n2, dp) / dist;
    let (src_n, tgt_n, theta) = if angle1.abs().acos() > angle2.abs().acos() + SOURCE_TIE_EPS {
        dp = [-dp[0], -dp[1], -dp[2]];
        (n2, n1, -angle2)
    } else {
        (n1, n2, angle1)
    };
    let v = cross(dp, src_n);
    let v_norm = dot(v, v).sqrt();
    if v_norm == 0.0 {
        return None;
    }
    let v = [v[0] / v_norm, v[1] / v_norm, v[2] / v_norm];
    let w = cross(src_n, v);
    let phi = dot(v, tgt_n);
    let alpha = dot(w, tgt_n).atan2(dot(src_n, tgt_n));
    Some((alpha, phi, theta))
}

#[inline]
fn bin(value01: f64) -> usize {
    let b = (BINS_PER_FEATURE as f64 * value01).floor();
    if b < 0.0 {
        0
    } else {
        (b as usize).min(BINS_PER_FEATURE - 1)
    }
}

/// Bin indices for a feature triplet: alpha over [-pi, pi], phi and theta over [-1, 1].
pub fn feature_bins(alpha: f64, phi: f64, theta: f64) -> [usize; 3] {
    [
        bin((alpha + std::f64::consts::PI) * (1.0 / (2.0 * std::f64::consts::PI))),
        bin((phi + 1.0) * 0.5),
        bin((theta + 1.0) * 0.5),
    ]
}

/// FPFH for every point: `SPFH(p) + (1/k) * sum_q SPFH(q) / |p - q|` over the
/// `k` neighbors within `radius`, each sub-histogram normalized to 100.
pub fn compute_fpfh(cloud: &PointCloud, radius: f64) -> Result<Vec<FpfhDescriptor>> {
    let normals = cloud
        .normals
        .as_ref()
        .ok_or_else(|| SgpError::invalid("FPFH requires normals"))?;
    if !(radius > 0.0) {
        return Err(SgpError::invalid(format!("FPFH radius must be positive, got {radius}")));
    }
    let pts = &cloud.points;
    let tree = KdTree::from_points(pts);

    // neighbors within radius, excluding the point itself and exact duplicates
    let neighbors: Vec<Vec<(usize, f64)>> = pts
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            tree.within_radius_point(p, radius)
                .into_iter()
                .filter(|&j| j != i)
                .filter_map(|j| {
                    let d2 = squared_distance(&v3(p), &v3(&pts[j]));
                    (d2 > 0.0).then(|| (j, d2.sqrt()))
                })
                .collect()
        })
        .collect();

    let spfh: Vec<[f64; FPFH_DIM]> = (0..pts.len())
        .into_par_iter()
        .map(|i| {
            let mut h = [0.0; FPFH_DIM];
            let nb = &neighbors[i];
            if nb.is_empty() {
                return h;
            }
            let incr = 100.0 / nb.len() as f64;
            for &(j, _) in nb {
                if let Some((a, f, t)) = pair_features(&pts[i], &normals[i], &pts[j], &normals[j]) {
                    let [ba, bf, bt] = feature_bins(a, f, t);
                    h[ba] += incr;
                    h[BINS_PER_FEATURE + bf] += incr;
                    h[2 * BINS_PER_FEATURE + bt] += incr;
                }
            }
            h
        })
        .collect();

    Ok((0..pts.len())
        .into_par_iter()
        .map(|i| {
            let nb = &neighbors[i];
            if nb.is_empty() {
                return FpfhDescriptor::ZERO;
            }
            let mut acc = [0.0; FPFH_DIM];
            for &(j, d) in nb {
                for b in 0..FPFH_DIM {
                    acc[b] += spfh[j][b] / d;
                }
            }
            let k = nb.len() as f64;
            let mut h = [0.0; FPFH_DIM];
            for b in 0..FPFH_DIM {
                h[b] = spfh[i][b] + acc[b] / k;
            }
            for sub_hist in h.chunks_mut(BINS_PER_FEATURE) {
                let sum: f64 = sub_hist.iter().sum();
                if sum > 0.0 {
                    let scale = 100.0 / sum;
                    for v in sub_hist.iter_mut() {
                        *v *= scale;
                    }
                }
            }
            FpfhDescriptor { histogram: h }
        })
        .collect())
}

/// Descriptor matrix with zero (isolated-point) rows excluded from matching.
pub fn to_descriptor_set(descs: &[FpfhDescriptor]) -> Result<DescriptorSet> {
    let data: Vec<f64> = descs.iter().flat_map(|d| d.histogram).collect();
    Ok(DescriptorSet::new(FPFH_DIM, data)?.with_zero_rows_excluded())
}

/// Voxelized cloud with normals and its FPFH descriptors.
#[derive(Debug, Clone)]
pub struct PreparedCloud {
    pub cloud: PointCloud,
    pub fpfh: Vec<FpfhDescriptor>,
}

impl PreparedCloud {
    pub fn descriptor_set(&self) -> Result<DescriptorSet> {
        to_descriptor_set(&self.fpfh)
    }
}

/// Downsample, estimate normals and compute FPFH in one go.
pub fn prepare_cloud(raw: &PointCloud, params: &FpfhParams) -> Result<PreparedCloud> {
    let down = voxel_downsample(raw, params.voxel_size)?;
    if down.len() < params.normal_k {
        return Err(SgpError::invalid(format!(
            "cloud has {} points after voxelization, need at least {}",
            down.len(),
            params.normal_k
        )));
    }
    let with_normals = estimate_normals(&down, params.normal_k)?.cloud;
    let fpfh = compute_fpfh(&with_normals, params.radius)?;
    Ok(PreparedCloud {
        cloud: with_normals,
        fpfh,
    })
}
