//! Robust estimation: Horn's closed-form alignment inside RANSAC, refined by
//! point-to-point ICP, plus the non-robust single-shot Horn teacher.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SgpError};
use crate::geometry::{registration_residual, Mat3, PointCloud, RigidTransform, Vec3};
use crate::kdtree::KdTree;
use crate::matching::Correspondence;

/// Horn rejects `H` when its second singular value falls below this fraction of the first.
pub const DEGENERACY_RATIO: f64 = 1e-12;
pub const ICP_CONVERGENCE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacConfig {
    pub max_iterations: usize,
    pub confidence: f64,
    /// Inlier residual bound, also the TLS truncation `c_bar`.
    pub inlier_threshold: f64,
    pub seed: u64,
}

impl RansacConfig {
    pub const SAMPLE_SIZE: usize = 3;

    pub fn validate(&self) -> Result<()> {
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(SgpError::invalid(format!("confidence must lie in (0, 1), got {}", self.confidence)));
        }
        if !(self.inlier_threshold > 0.0) {
            return Err(SgpError::invalid("inlier threshold must be positive"));
        }
        if self.max_iterations < 1 {
            return Err(SgpError::invalid("RANSAC needs at least one iteration"));
        }
        Ok(())
    }
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            max_iterations: 10_000,
            confidence: 0.999,
            inlier_threshold: 0.07,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeacherResult {
    pub transform: RigidTransform,
    /// `inlier_indices.len() / correspondence count`.
    pub inlier_rate: f64,
    /// Indices into the correspondence list.
    pub inlier_indices: Vec<usize>,
    pub iterations_run: usize,
}

/// Least-squares rigid alignment `argmin sum |q - R p - t|^2` with reflection correction.
pub fn horn_solve(pairs: &[(Vec3, Vec3)]) -> Result<RigidTransform> {
    if pairs.len() < 3 {
        return Err(SgpError::Degenerate(format!("Horn needs at least 3 pairs, got {}", pairs.len())));
    }
    let n = pairs.len() as f64;
    let p_mean = pairs.iter().map(|(p, _)| p).sum::<Vec3>() / n;
    let q_mean = pairs.iter().map(|(_, q)| q).sum::<Vec3>() / n;
    let mut h = Mat3::zeros();
    for (p, q) in pairs {
        h += (p - p_mean) * (q - q_mean).transpose();
    }
    let svd = h.svd(true, true);
    let sv = svd.singular_values;
    if !(sv[0] > 0.0) || sv[1] < DEGENERACY_RATIO * sv[0] {
        return Err(SgpError::Degenerate("cross-covariance has rank < 2".into()));
    }
    let u = svd.u.expect("svd u");
    let v = svd.v_t.expect("svd v_t").transpose();
    let d = (v * u.transpose()).determinant().signum();
    let rotation = v * Mat3::from_diagonal(&Vec3::new(1.0, 1.0, d)) * u.transpose();
    Ok(RigidTransform {
        rotation,
        translation: q_mean - rotation * p_mean,
    })
}

/// Endpoint pairs `(p, q)` for each correspondence.
pub fn correspondence_points(corrs: &[Correspondence], a: &PointCloud, b: &PointCloud) -> Vec<(Vec3, Vec3)> {
    corrs
        .iter()
        .map(|c| (a.points[c.index_a], b.points[c.index_b]))
        .collect()
}

fn inliers_of(t: &RigidTransform, pairs: &[(Vec3, Vec3)], threshold: f64) -> Vec<usize> {
    pairs
        .iter()
        .enumerate()
        .filter(|(_, (p, q))| registration_residual(t, p, q) < threshold)
        .map(|(i, _)| i)
        .collect()
}

/// Correspondences with residual strictly below `threshold`.
pub fn count_inliers(
    t: &RigidTransform,
    corrs: &[Correspondence],
    a: &PointCloud,
    b: &PointCloud,
    threshold: f64,
) -> Result<(usize, Vec<usize>)> {
    if !(threshold > 0.0) {
        return Err(SgpError::invalid("inlier threshold must be positive"));
    }
    let idx = inliers_of(t, &correspondence_points(corrs, a, b), threshold);
    Ok((idx.len(), idx))
}

/// Iterations needed to draw one all-inlier minimal sample with probability `confidence`.
pub fn ransac_iteration_bound(inlier_rate: f64, confidence: f64) -> f64 {
    if inlier_rate >= 1.0 {
        return 1.0;
    }
    if inlier_rate <= 0.0 {
        return f64::INFINITY;
    }
    let all_in = inlier_rate.powi(RansacConfig::SAMPLE_SIZE as i32);
    let denom = (1.0 - all_in).ln();
    if denom == 0.0 {
        return f64::INFINITY;
    }
    ((1.0 - confidence).ln() / denom).max(1.0)
}

pub fn ransac_register(
    corrs: &[Correspondence],
    a: &PointCloud,
    b: &PointCloud,
    cfg: &RansacConfig,
) -> Result<TeacherResult> {
    cfg.validate()?;
    if corrs.len() < RansacConfig::SAMPLE_SIZE {
        return Err(SgpError::NoModel(format!("{} correspondences, need 3", corrs.len())));
    }
    let pairs = correspondence_points(corrs, a, b);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(RigidTransform, usize)> = None;
    let mut bound = f64::INFINITY;
    let mut iterations = 0;
    while iterations < cfg.max_iterations && (iterations as f64) < bound {
        iterations += 1;
        let idx = sample(&mut rng, pairs.len(), RansacConfig::SAMPLE_SIZE);
        let minimal: Vec<(Vec3, Vec3)> = idx.iter().map(|i| pairs[i]).collect();
        let Ok(model) = horn_solve(&minimal) else {
            continue;
        };
        let count = pairs
            .iter()
            .filter(|(p, q)| registration_residual(&model, p, q) < cfg.inlier_threshold)
            .count();
        if best.as_ref().is_none_or(|(_, c)| count > *c) {
            best = Some((model, count));
            bound = ransac_iteration_bound(count as f64 / pairs.len() as f64, cfg.confidence);
        }
    }
    let (mut model, _) = best.ok_or_else(|| SgpError::NoModel("every sampled triple was degenerate".into()))?;
    let mut inliers = inliers_of(&model, &pairs, cfg.inlier_threshold);
    if inliers.len() >= RansacConfig::SAMPLE_SIZE {
        let consensus: Vec<(Vec3, Vec3)> = inliers.iter().map(|&i| pairs[i]).collect();
        if let Ok(refit) = horn_solve(&consensus) {
            model = refit;
            inliers = inliers_of(&model, &pairs, cfg.inlier_threshold);
        }
    }
    Ok(TeacherResult {
        transform: model,
        inlier_rate: inliers.len() as f64 / pairs.len() as f64,
        inlier_indices: inliers,
        iterations_run: iterations,
    })
}

/// Single Horn solve over every putative correspondence; no sampling, no trimming.
pub fn horn_direct_teacher(
    corrs: &[Correspondence],
    a: &PointCloud,
    b: &PointCloud,
    inlier_threshold: f64,
) -> Result<TeacherResult> {
    let pairs = correspondence_points(corrs, a, b);
    let transform = horn_solve(&pairs)?;
    let inliers = inliers_of(&transform, &pairs, inlier_threshold);
    Ok(TeacherResult {
        transform,
        inlier_rate: inliers.len() as f64 / pairs.len() as f64,
        inlier_indices: inliers,
        iterations_run: 1,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    pub transform: RigidTransform,
    /// False when no pairing existed at the initial transform; `transform` is then the input.
    pub refined: bool,
    pub iterations: usize,
    /// `(index_a, index_b)` pairs the returned transform was solved on.
    pub final_pairs: Vec<(usize, usize)>,
}

/// Mean squared residual of index pairs under `t`.
pub fn mean_squared_residual(t: &RigidTransform, a: &PointCloud, b: &PointCloud, pairs: &[(usize, usize)]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    pairs
        .iter()
        .map(|&(i, j)| (b.points[j] - t.apply(&a.points[i])).norm_squared())
        .sum::<f64>()
        / pairs.len() as f64
}

/// Point-to-point ICP from `t0`.
///
/// Each round pairs every transformed point of `a` with its nearest point in
/// `b` within `dist_threshold` and re-solves Horn; it stops once the mean
/// squared pairing residual improves by less than a relative 1e-6.
pub fn icp_refine(
    t0: &RigidTransform,
    a: &PointCloud,
    b: &PointCloud,
    max_iter: usize,
    dist_threshold: f64,
) -> Result<IcpResult> {
    if a.is_empty() || b.is_empty() {
        return Err(SgpError::invalid("ICP needs nonempty clouds"));
    }
    let tree = KdTree::from_points(&b.points);
    let thr2 = dist_threshold * dist_threshold;
    let pair_up = |t: &RigidTransform| -> Vec<(usize, usize)> {
        a.points
            .iter()
            .enumerate()
            .filter_map(|(i, p)| {
                let (j, d2) = tree.nearest_point(&t.apply(p))?;
                (d2 <= thr2).then_some((i, j))
            })
            .collect()
    };

    let mut t = *t0;
    let mut final_pairs = Vec::new();
    let mut prev_mean = f64::INFINITY;
    let mut iterations = 0;
    for it in 0..max_iter {
        let pairs = pair_up(&t);
        if pairs.len() < 3 {
            if it == 0 {
                return Ok(IcpResult {
                    transform: *t0,
                    refined: false,
                    iterations: 0,
                    final_pairs: pairs,
                });
            }
            break;
        }
        let mean = mean_squared_residual(&t, a, b, &pairs);
        if it > 0 && (prev_mean == 0.0 || (prev_mean - mean) / prev_mean < ICP_CONVERGENCE_TOL) {
            break;
        }
        let pts: Vec<(Vec3, Vec3)> = pairs.iter().map(|&(i, j)| (a.points[i], b.points[j])).collect();
        match horn_solve(&pts) {
            Ok(next) => {
                t = next;
                final_pairs = pairs;
                prev_mean = mean;
                iterations = it + 1;
            }
            Err(_) => break,
        }
    }
    Ok(IcpResult {
        transform: t,
        refined: iterations > 0,
        iterations,
        final_pairs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TeacherKind {
    #[default]
    Ransac,
    HornDirect,
}

impl TeacherKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TeacherKind::Ransac => "ransac",
            TeacherKind::HornDirect => "horn_direct",
        }
    }
}

impl std::str::FromStr for TeacherKind {
    type Err = SgpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ransac" => Ok(TeacherKind::Ransac),
            "horn_direct" => Ok(TeacherKind::HornDirect),
            other => Err(SgpError::invalid(format!("unknown teacher `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TeacherConfig {
    pub kind: TeacherKind,
    pub ransac: RansacConfig,
    pub icp_max_iterations: usize,
    pub icp_distance: f64,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        let ransac = RansacConfig::default();
        Self {
            kind: TeacherKind::Ransac,
            ransac,
            icp_max_iterations: 50,
            icp_distance: ransac.inlier_threshold,
        }
    }
}

/// Robust (or, for ablation, direct) estimate followed by ICP; inliers are
/// recounted under the refined transform.
pub fn teach(
    corrs: &[Correspondence],
    a: &PointCloud,
    b: &PointCloud,
    cfg: &TeacherConfig,
) -> Result<TeacherResult> {
    let coarse = match cfg.kind {
        TeacherKind::Ransac => ransac_register(corrs, a, b, &cfg.ransac)?,
        TeacherKind::HornDirect => horn_direct_teacher(corrs, a, b, cfg.ransac.inlier_threshold)?,
    };
    let icp = icp_refine(&coarse.transform, a, b, cfg.icp_max_iterations, cfg.icp_distance)?;
    let transform = icp.transform.renormalize_if_drifted();
    let (_, inliers) = count_inliers(&transform, corrs, a, b, cfg.ransac.inlier_threshold)?;
    Ok(TeacherResult {
        transform,
        inlier_rate: inliers.len() as f64 / corrs.len() as f64,
        inlier_indices: inliers,
        iterations_run: coarse.iterations_run,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{apply_transform, axis_angle_matrix, rotation_error_deg, translation_error};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rotation(rng: &mut impl Rng) -> Mat3 {
        let axis = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        axis_angle_matrix(axis, rng.random_range(-3.0..3.0))
    }

    fn random_points(rng: &mut impl Rng, n: usize) -> Vec<Vec3> {
        (0..n)
            .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    fn identity_corrs(n: usize) -> Vec<Correspondence> {
        (0..n)
            .map(|i| Correspondence {
                index_a: i,
                index_b: i,
                feature_distance: 0.0,
            })
            .collect()
    }

    #[test]
    fn horn_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let pts = random_points(&mut rng, 20);
        let pairs: Vec<_> = pts.iter().map(|p| (*p, *p)).collect();
        let t = horn_solve(&pairs).unwrap();
        assert!((t.rotation - Mat3::identity()).amax() < 1e-12);
        assert!(t.translation.amax() < 1e-12);
    }

    #[test]
    fn horn_recovers_ground_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..20 {
            let gt = RigidTransform {
                rotation: random_rotation(&mut rng),
                translation: Vec3::new(rng.random(), rng.random(), rng.random()) * 4.0,
            };
            let pairs: Vec<_> = random_points(&mut rng, 50).into_iter().map(|p| (p, gt.apply(&p))).collect();
            let t = horn_solve(&pairs).unwrap();
            assert!(rotation_error_deg(&t.rotation, &gt.rotation) < 1e-9);
            assert!(translation_error(&t.translation, &gt.translation) < 1e-9);
        }
    }

    #[test]
    fn horn_degenerate_inputs() {
        let p = Vec3::new(1.0, 2.0, 3.0);
        assert!(matches!(horn_solve(&[(p, p), (p, p)]), Err(SgpError::Degenerate(_))));
        let collinear: Vec<_> = (0..5).map(|i| Vec3::x() * i as f64).map(|v| (v, v)).collect();
        assert!(matches!(horn_solve(&collinear), Err(SgpError::Degenerate(_))));
    }

    #[test]
    fn horn_is_translation_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let pts = random_points(&mut rng, 30);
        let r = random_rotation(&mut rng);
        let pairs: Vec<_> = pts.iter().map(|p| (*p, r * p + random_points(&mut rng, 1)[0] * 0.05)).collect();
        let shift = Vec3::new(0.5, -1.5, 2.0);
        let shifted: Vec<_> = pairs.iter().map(|(p, q)| (*p, q + shift)).collect();
        let t0 = horn_solve(&pairs).unwrap();
        let t1 = horn_solve(&shifted).unwrap();
        assert!((t0.rotation - t1.rotation).amax() < 1e-12);
        assert!((t1.translation - t0.translation - shift).amax() < 1e-12);
    }

    #[test]
    fn adaptive_bound_is_monotone() {
        let mut last = f64::INFINITY;
        for i in 1..=100 {
            let b = ransac_iteration_bound(i as f64 / 100.0, 0.999);
            assert!(b <= last);
            last = b;
        }
        assert_eq!(ransac_iteration_bound(1.0, 0.999), 1.0);
        assert!(ransac_iteration_bound(0.0, 0.999).is_infinite());
    }

    #[test]
    fn count_inliers_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let pts = random_points(&mut rng, 30);
        let a = PointCloud::from_points(pts.clone());
        let shifted = apply_transform(&RigidTransform::from_translation(Vec3::x()), &a);
        let corrs = identity_corrs(30);
        let gt = RigidTransform::from_translation(Vec3::x());
        assert_eq!(count_inliers(&gt, &corrs, &a, &shifted, 0.07).unwrap().0, 30);
        assert_eq!(count_inliers(&RigidTransform::identity(), &corrs, &a, &shifted, 0.07).unwrap().0, 0);
        // constructed residuals straddling the threshold
        let offsets = [0.0, 0.069, 0.0701, 0.2, 0.03, 0.07];
        let b = PointCloud::from_points(pts[..6].iter().zip(offsets).map(|(p, o)| p + Vec3::y() * o).collect());
        let (n, idx) = count_inliers(&RigidTransform::identity(), &identity_corrs(6), &a, &b, 0.07).unwrap();
        assert_eq!(idx, vec![0, 1, 4]);
        assert_eq!(n, 3);
        assert!(count_inliers(&gt, &corrs, &a, &shifted, 0.0).is_err());
    }

    #[test]
    fn ransac_outlier_free_stops_early() {
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let gt = RigidTransform {
            rotation: random_rotation(&mut rng),
            translation: Vec3::new(0.3, -0.2, 1.0),
        };
        let a = PointCloud::from_points(random_points(&mut rng, 100));
        let b = apply_transform(&gt, &a);
        let res = ransac_register(&identity_corrs(100), &a, &b, &RansacConfig::default()).unwrap();
        assert!(rotation_error_deg(&res.transform.rotation, &gt.rotation) < 1e-9);
        assert!(translation_error(&res.transform.translation, &gt.translation) < 1e-9);
        assert_eq!(res.iterations_run, 1);
        assert_eq!(res.inlier_rate, 1.0);
        let direct = horn_direct_teacher(&identity_corrs(100), &a, &b, 0.07).unwrap();
        assert!((direct.transform.rotation - res.transform.rotation).amax() < 1e-9);
        assert!((direct.transform.translation - res.transform.translation).amax() < 1e-9);
        let icp = icp_refine(&res.transform, &a, &b, 50, 0.07).unwrap();
        assert!((icp.transform.rotation - res.transform.rotation).amax() < 1e-9);
        assert!((icp.transform.translation - res.transform.translation).amax() < 1e-9);
    }

    #[test]
    fn ransac_rejects_too_few() {
        let a = PointCloud::from_points(vec![Vec3::zeros(); 2]);
        assert!(matches!(
            ransac_register(&identity_corrs(2), &a, &a, &RansacConfig::default()),
            Err(SgpError::NoModel(_))
        ));
        let line = PointCloud::from_points((0..10).map(|i| Vec3::x() * i as f64).collect());
        assert!(matches!(
            ransac_register(&identity_corrs(10), &line, &line, &RansacConfig { max_iterations: 50, ..Default::default() }),
            Err(SgpError::NoModel(_))
        ));
    }

    #[test]
    fn ransac_inliers_revalidate_and_are_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(46);
        let gt = RigidTransform::from_axis_angle(Vec3::new(1.0, 1.0, 0.0), 0.4, Vec3::new(0.1, 0.2, 0.3));
        let a = PointCloud::from_points(random_points(&mut rng, 100));
        let mut b = apply_transform(&gt, &a);
        for p in b.points.iter_mut().skip(40) {
            *p = random_points(&mut rng, 1)[0];
        }
        let cfg = RansacConfig { seed: 9, ..Default::default() };
        let r1 = ransac_register(&identity_corrs(100), &a, &b, &cfg).unwrap();
        let r2 = ransac_register(&identity_corrs(100), &a, &b, &cfg).unwrap();
        assert_eq!(r1, r2);
        for &i in &r1.inlier_indices {
            assert!(registration_residual(&r1.transform, &a.points[i], &b.points[i]) < cfg.inlier_threshold);
        }
        assert!(r1.transform.validate().is_ok());
    }

    fn grid_cloud(n: usize, spacing: f64) -> PointCloud {
        let mut pts = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let (x, y) = (i as f64 * spacing, j as f64 * spacing);
                pts.push(Vec3::new(x, y, 1.0 + 0.3 * (2.0 * x).sin() * (3.0 * y).cos()));
            }
        }
        PointCloud::from_points(pts)
    }

    #[test]
    fn icp_fixed_point() {
        let a = grid_cloud(20, 0.05);
        let gt = RigidTransform::from_axis_angle(Vec3::z(), 0.3, Vec3::new(0.1, 0.0, 0.05));
        let b = apply_transform(&gt, &a);
        let res = icp_refine(&gt, &a, &b, 50, 0.07).unwrap();
        assert!((res.transform.rotation - gt.rotation).amax() < 1e-9);
        assert!((res.transform.translation - gt.translation).amax() < 1e-9);
    }

    #[test]
    fn icp_converges_from_small_perturbation() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let mut pts: Vec<Vec3> = (0..8000)
            .map(|_| {
                let (x, y): (f64, f64) = (rng.random_range(0.0..4.0), rng.random_range(0.0..4.0));
                Vec3::new(x, y, 1.0 + 0.3 * (1.5 * x).sin() * (1.7 * y).cos())
            })
            .collect();
        pts.sort_by(|p, q| p.x.total_cmp(&q.x));
        let gt = RigidTransform::from_axis_angle(Vec3::new(0.0, 1.0, 1.0), 0.5, Vec3::new(0.2, -0.1, 0.3));
        // 80% overlap: a drops the last fifth along x, b the first fifth
        let a = PointCloud::from_points(pts[..6667].to_vec());
        let b = apply_transform(&gt, &PointCloud::from_points(pts[1333..].to_vec()));
        // 3 degrees about the centroid of a, plus 3 cm
        let c = a.points.iter().sum::<Vec3>() / a.len() as f64;
        let r = axis_angle_matrix(Vec3::new(1.0, -0.5, 0.2), 3f64.to_radians());
        let perturb = RigidTransform {
            rotation: r,
            translation: c - r * c + Vec3::new(0.03, 0.0, 0.0),
        };
        let t0 = crate::geometry::compose(&gt, &perturb);
        let res = icp_refine(&t0, &a, &b, 50, 0.07).unwrap();
        let (re, te) = (rotation_error_deg(&res.transform.rotation, &gt.rotation), translation_error(&res.transform.translation, &gt.translation));
        assert!(re < 0.1 && te < 1e-3, "rotation {re} deg, translation {te} m, {} iterations", res.iterations);
    }

    #[test]
    fn icp_never_worse_than_start_on_final_pairs() {
        let a = grid_cloud(20, 0.05);
        let gt = RigidTransform::from_axis_angle(Vec3::new(1.0, 2.0, 0.0), 1.3, Vec3::new(0.4, 0.1, -0.2));
        let b = apply_transform(&gt, &a);
        let t0 = RigidTransform::from_axis_angle(Vec3::z(), 0.0, Vec3::new(0.4, 0.1, -0.2));
        let res = icp_refine(&t0, &a, &b, 50, 0.5).unwrap();
        if res.refined {
            let ours = mean_squared_residual(&res.transform, &a, &b, &res.final_pairs);
            let start = mean_squared_residual(&t0, &a, &b, &res.final_pairs);
            assert!(ours <= start + 1e-15);
        }
    }

    #[test]
    fn icp_without_pairs_returns_input() {
        let a = grid_cloud(5, 0.05);
        let far = apply_transform(&RigidTransform::from_translation(Vec3::x() * 10.0), &a);
        let res = icp_refine(&RigidTransform::identity(), &a, &far, 50, 0.07).unwrap();
        assert!(!res.refined);
        assert_eq!(res.transform, RigidTransform::identity());
    }
}
