//! Rigid transforms, point clouds, residuals and error metrics.

use nalgebra::{Matrix3, Matrix4, Vector3};

use crate::descriptors::DescriptorSet;
use crate::error::{Result, SgpError};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

const ORTHO_TOL: f64 = 1e-9;
const NORMAL_TOL: f64 = 1e-6;

/// Element of SO(3) x R^3 acting as `p -> R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// Builds a transform, checking orthonormality, orientation and finiteness.
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self> {
        let t = Self {
            rotation,
            translation,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self {
            rotation: Mat3::identity(),
            translation,
        }
    }

    /// Rotation of `angle_rad` about `axis` (normalized internally) followed by `translation`.
    pub fn from_axis_angle(axis: Vec3, angle_rad: f64, translation: Vec3) -> Self {
        Self {
            rotation: axis_angle_matrix(axis, angle_rad),
            translation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rotation.iter().chain(self.translation.iter()).any(|v| !v.is_finite()) {
            return Err(SgpError::invalid("transform has non-finite entries"));
        }
        let gram = self.rotation.transpose() * self.rotation;
        if (gram - Mat3::identity()).amax() > ORTHO_TOL {
            return Err(SgpError::invalid("rotation is not orthonormal"));
        }
        if (self.rotation.determinant() - 1.0).abs() > ORTHO_TOL {
            return Err(SgpError::invalid("rotation determinant is not +1"));
        }
        Ok(())
    }

    #[inline]
    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Rotation row-major followed by translation.
    pub fn to_row_major_12(&self) -> [f64; 12] {
        let mut out = [0.0; 12];
        for r in 0..3 {
            for c in 0..3 {
                out[r * 3 + c] = self.rotation[(r, c)];
            }
        }
        out[9] = self.translation.x;
        out[10] = self.translation.y;
        out[11] = self.translation.z;
        out
    }

    pub fn from_row_major_12(v: &[f64; 12]) -> Self {
        Self {
            rotation: Mat3::from_row_slice(&v[..9]),
            translation: Vec3::new(v[9], v[10], v[11]),
        }
    }

    /// Projects the rotation back onto SO(3) (polar decomposition).
    pub fn orthonormalized(&self) -> Self {
        Self {
            rotation: project_to_rotation(&self.rotation),
            translation: self.translation,
        }
    }

    /// Re-orthonormalizes only when the rotation has drifted past the invariant tolerance.
    pub fn renormalize_if_drifted(self) -> Self {
        let gram = self.rotation.transpose() * self.rotation;
        if (gram - Mat3::identity()).amax() > ORTHO_TOL {
            self.orthonormalized()
        } else {
            self
        }
    }
}

/// Rodrigues' formula.
pub fn axis_angle_matrix(axis: Vec3, angle_rad: f64) -> Mat3 {
    let n = axis.norm();
    if n == 0.0 || angle_rad == 0.0 {
        return Mat3::identity();
    }
    let k = axis / n;
    let kx = k.cross_matrix();
    Mat3::identity() + kx * angle_rad.sin() + kx * kx * (1.0 - angle_rad.cos())
}

/// Nearest proper rotation in the Frobenius sense.
pub fn project_to_rotation(m: &Mat3) -> Mat3 {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let d = (u * v_t).determinant().signum();
    u * Mat3::from_diagonal(&Vec3::new(1.0, 1.0, d)) * v_t
}

/// Point set with optional unit normals and per-point descriptors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub normals: Option<Vec<Vec3>>,
    pub descriptors: Option<DescriptorSet>,
}

impl PointCloud {
    pub fn from_points(points: Vec<Vec3>) -> Self {
        Self {
            points,
            normals: None,
            descriptors: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(SgpError::invalid("point coordinates must be finite"));
        }
        if let Some(normals) = &self.normals {
            if normals.len() != self.points.len() {
                return Err(SgpError::DimensionMismatch {
                    expected: self.points.len(),
                    found: normals.len(),
                });
            }
            if normals.iter().any(|n| (n.norm() - 1.0).abs() > NORMAL_TOL) {
                return Err(SgpError::invalid("normals must have unit length"));
            }
        }
        if let Some(desc) = &self.descriptors {
            if desc.len() != self.points.len() {
                return Err(SgpError::DimensionMismatch {
                    expected: self.points.len(),
                    found: desc.len(),
                });
            }
        }
        Ok(())
    }

    /// Axis-aligned bounding box `(min, max)`; `None` for an empty cloud.
    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        let first = *self.points.first()?;
        Some(self.points.iter().fold((first, first), |(lo, hi), p| {
            (lo.inf(p), hi.sup(p))
        }))
    }
}

pub fn apply_transform(t: &RigidTransform, cloud: &PointCloud) -> PointCloud {
    PointCloud {
        points: cloud.points.iter().map(|p| t.apply(p)).collect(),
        normals: cloud
            .normals
            .as_ref()
            .map(|ns| ns.iter().map(|n| t.rotation * n).collect()),
        descriptors: cloud.descriptors.clone(),
    }
}

/// `t1` first, then `t2`.
pub fn compose(t2: &RigidTransform, t1: &RigidTransform) -> RigidTransform {
    RigidTransform {
        rotation: t2.rotation * t1.rotation,
        translation: t2.rotation * t1.translation + t2.translation,
    }
}

pub fn inverse(t: &RigidTransform) -> RigidTransform {
    let rt = t.rotation.transpose();
    RigidTransform {
        rotation: rt,
        translation: -(rt * t.translation),
    }
}

/// Geodesic angle between two rotations, in degrees, within [0, 180].
///
/// Evaluated as `atan2(sin, cos)` of the relative rotation rather than a bare
/// `acos` of the clamped trace term: the two agree mathematically, but `acos`
/// loses all precision below ~1e-6 degrees.
pub fn rotation_error_deg(r1: &Mat3, r2: &Mat3) -> f64 {
    let rel = r1.transpose() * r2;
    let cos = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let skew = Vec3::new(
        rel[(2, 1)] - rel[(1, 2)],
        rel[(0, 2)] - rel[(2, 0)],
        rel[(1, 0)] - rel[(0, 1)],
    );
    let sin = (skew.norm() / 2.0).min(1.0);
    sin.atan2(cos).to_degrees()
}

pub fn translation_error(t1: &Vec3, t2: &Vec3) -> f64 {
    (t1 - t2).norm()
}

/// `|q - R p - t|`.
#[inline]
pub fn registration_residual(t: &RigidTransform, p: &Vec3, q: &Vec3) -> f64 {
    (q - t.apply(p)).norm()
}

/// Truncated least squares cost `min(r^2, c_bar^2)`.
pub fn tls_cost(r: f64, c_bar: f64) -> Result<f64> {
    if !(c_bar > 0.0) {
        return Err(SgpError::invalid(format!("c_bar must be positive, got {c_bar}")));
    }
    Ok(if r.abs() < c_bar { r * r } else { c_bar * c_bar })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_transform(rng: &mut impl Rng) -> RigidTransform {
        let axis = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let angle = rng.random_range(-3.1..3.1);
        let t = Vec3::new(
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
        );
        RigidTransform::from_axis_angle(axis, angle, t)
    }

    fn random_cloud(rng: &mut impl Rng, n: usize) -> PointCloud {
        PointCloud::from_points(
            (0..n)
                .map(|_| {
                    Vec3::new(
                        rng.random_range(-2.0..2.0),
                        rng.random_range(-2.0..2.0),
                        rng.random_range(-2.0..2.0),
                    )
                })
                .collect(),
        )
    }

    #[test]
    fn identity_leaves_cloud_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cloud = random_cloud(&mut rng, 20);
        assert_eq!(apply_transform(&RigidTransform::identity(), &cloud), cloud);
    }

    #[test]
    fn pure_translation() {
        let t = RigidTransform::from_translation(Vec3::new(1.0, 0.0, 0.0));
        let out = apply_transform(&t, &PointCloud::from_points(vec![Vec3::zeros()]));
        assert_eq!(out.points, vec![Vec3::new(1.0, 0.0, 0.0)]);
    }

    #[test]
    fn normals_rotate_and_descriptors_carry() {
        let t = RigidTransform::from_axis_angle(Vec3::z(), std::f64::consts::FRAC_PI_2, Vec3::new(3.0, 0.0, 0.0));
        let cloud = PointCloud {
            points: vec![Vec3::zeros()],
            normals: Some(vec![Vec3::x()]),
            descriptors: Some(DescriptorSet::from_rows(&[vec![1.0, 2.0]]).unwrap()),
        };
        let out = apply_transform(&t, &cloud);
        assert_abs_diff_eq!(out.normals.unwrap()[0], Vec3::y(), epsilon = 1e-15);
        assert_eq!(out.descriptors, cloud.descriptors);
    }

    #[test]
    fn composed_application_matches_sequential() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t1 = random_transform(&mut rng);
        let t2 = random_transform(&mut rng);
        let cloud = random_cloud(&mut rng, 100);
        let once = apply_transform(&compose(&t2, &t1), &cloud);
        let twice = apply_transform(&t2, &apply_transform(&t1, &cloud));
        let dev = once
            .points
            .iter()
            .zip(&twice.points)
            .map(|(a, b)| (a - b).amax())
            .fold(0.0, f64::max);
        assert!(dev < 1e-12, "deviation {dev}");
    }

    #[test]
    fn compose_matches_homogeneous_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let t1 = random_transform(&mut rng);
            let t2 = random_transform(&mut rng);
            // 4x4 oracle: plain triple loop, independent of nalgebra's product
            let a = t2.to_homogeneous();
            let b = t1.to_homogeneous();
            let mut prod = [[0.0; 4]; 4];
            for (i, row) in prod.iter_mut().enumerate() {
                for (j, cell) in row.iter_mut().enumerate() {
                    for k in 0..4 {
                        *cell += a[(i, k)] * b[(k, j)];
                    }
                }
            }
            let c = compose(&t2, &t1).to_homogeneous();
            for i in 0..4 {
                for j in 0..4 {
                    assert!((c[(i, j)] - prod[i][j]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn compose_with_identity_and_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let t = random_transform(&mut rng);
        assert_eq!(compose(&t, &RigidTransform::identity()), t);
        let id = compose(&inverse(&t), &t);
        assert!((id.rotation - Mat3::identity()).amax() < 1e-12);
        assert!(id.translation.amax() < 1e-12);
    }

    #[test]
    fn inverse_involution_and_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert_eq!(inverse(&RigidTransform::identity()), RigidTransform::identity());
        let t = random_transform(&mut rng);
        let tt = inverse(&inverse(&t));
        assert!((tt.rotation - t.rotation).amax() < 1e-12);
        assert!((tt.translation - t.translation).amax() < 1e-12);
        let cloud = random_cloud(&mut rng, 50);
        let back = apply_transform(&inverse(&t), &apply_transform(&t, &cloud));
        for (a, b) in back.points.iter().zip(&cloud.points) {
            assert!((a - b).amax() < 1e-12);
        }
    }

    #[test]
    fn rotation_error_cases() {
        let r = axis_angle_matrix(Vec3::new(1.0, 2.0, 3.0), 0.7);
        assert_eq!(rotation_error_deg(&r, &r), 0.0);
        let flip = axis_angle_matrix(Vec3::z(), std::f64::consts::PI);
        assert_abs_diff_eq!(rotation_error_deg(&Mat3::identity(), &flip), 180.0, epsilon = 1e-9);
        let r37 = axis_angle_matrix(Vec3::z(), 37f64.to_radians());
        assert_abs_diff_eq!(rotation_error_deg(&Mat3::identity(), &r37), 37.0, epsilon = 1e-9);
    }

    #[test]
    fn rotation_error_resolves_tiny_angles() {
        let tiny = axis_angle_matrix(Vec3::new(0.3, -0.2, 0.9), 1e-11);
        let deg = rotation_error_deg(&Mat3::identity(), &tiny);
        assert!((deg - 1e-11f64.to_degrees()).abs() < 1e-15, "{deg}");
    }

    #[test]
    fn translation_error_cases() {
        assert_eq!(translation_error(&Vec3::zeros(), &Vec3::zeros()), 0.0);
        assert_eq!(translation_error(&Vec3::zeros(), &Vec3::new(3.0, 4.0, 0.0)), 5.0);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..10 {
            let a = Vec3::new(rng.random(), rng.random(), rng.random());
            let b = Vec3::new(rng.random(), rng.random(), rng.random());
            let oracle = ((a.x - b.x).powi(2) + (a.y - b.y).powi(2) + (a.z - b.z).powi(2)).sqrt();
            assert_abs_diff_eq!(translation_error(&a, &b), oracle, epsilon = 1e-15);
        }
    }

    #[test]
    fn residual_cases() {
        let id = RigidTransform::identity();
        let p = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(registration_residual(&id, &p, &p), 0.0);
        assert_abs_diff_eq!(
            registration_residual(&id, &Vec3::zeros(), &Vec3::new(0.07, 0.0, 0.0)),
            0.07,
            epsilon = 1e-15
        );
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let t = random_transform(&mut rng);
            let dir = Vec3::new(rng.random_range(-1.0..1.0), rng.random(), 0.5).normalize();
            let d = rng.random_range(0.0..0.5);
            let q = t.apply(&p) + dir * d;
            assert!((registration_residual(&t, &p, &q) - d).abs() < 1e-12);
        }
    }

    #[test]
    fn tls_cases() {
        assert_eq!(tls_cost(0.0, 0.3).unwrap(), 0.0);
        assert_eq!(tls_cost(2.0, 1.0).unwrap(), 1.0);
        assert_abs_diff_eq!(tls_cost(0.03, 0.07).unwrap(), 0.0009, epsilon = 1e-15);
        assert!(tls_cost(1.0, 0.0).is_err());
        assert!(tls_cost(1.0, -1.0).is_err());
    }

    #[test]
    fn validate_rejects_reflection() {
        let reflect = Mat3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0));
        assert!(RigidTransform::new(reflect, Vec3::zeros()).is_err());
        assert!(RigidTransform::new(Mat3::identity() * 1.1, Vec3::zeros()).is_err());
    }

    #[test]
    fn renormalize_repairs_drift() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut acc = RigidTransform::identity();
        let step = random_transform(&mut rng);
        for _ in 0..10_000 {
            acc = compose(&step, &acc);
        }
        let fixed = acc.renormalize_if_drifted();
        assert!(fixed.validate().is_ok());
    }

    fn arb_transform() -> impl Strategy<Value = RigidTransform> {
        (
            prop::array::uniform3(-1.0..1.0f64),
            -3.1..3.1f64,
            prop::array::uniform3(-10.0..10.0f64),
        )
            .prop_filter("nonzero axis", |(a, _, _)| Vec3::from(*a).norm() > 1e-3)
            .prop_map(|(a, ang, t)| RigidTransform::from_axis_angle(Vec3::from(a), ang, Vec3::from(t)))
    }

    proptest! {
        #[test]
        fn apply_is_an_isometry(t in arb_transform(), pts in prop::collection::vec(prop::array::uniform3(-5.0..5.0f64), 2..20)) {
            let cloud = PointCloud::from_points(pts.into_iter().map(Vec3::from).collect());
            let out = apply_transform(&t, &cloud);
            for i in 0..cloud.len() {
                for j in 0..cloud.len() {
                    let d0 = (cloud.points[i] - cloud.points[j]).norm();
                    let d1 = (out.points[i] - out.points[j]).norm();
                    prop_assert!((d0 - d1).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn rotation_error_symmetric_and_triangle(a in arb_transform(), b in arb_transform(), c in arb_transform()) {
            let ab = rotation_error_deg(&a.rotation, &b.rotation);
            prop_assert!((ab - rotation_error_deg(&b.rotation, &a.rotation)).abs() < 1e-9);
            prop_assert!((0.0..=180.0).contains(&ab));
            let bc = rotation_error_deg(&b.rotation, &c.rotation);
            let ac = rotation_error_deg(&a.rotation, &c.rotation);
            prop_assert!(ac <= ab + bc + 1e-6);
        }

        #[test]
        fn compose_is_associative(a in arb_transform(), b in arb_transform(), c in arb_transform()) {
            let l = compose(&compose(&a, &b), &c);
            let r = compose(&a, &compose(&b, &c));
            prop_assert!((l.rotation - r.rotation).amax() < 1e-9);
            prop_assert!((l.translation - r.translation).amax() < 1e-9);
        }

        #[test]
        fn tls_is_exactly_piecewise(r in -3.0..3.0f64, c in 0.01..2.0f64) {
            let v = tls_cost(r, c).unwrap();
            if r.abs() < c { prop_assert_eq!(v, r * r) } else { prop_assert_eq!(v, c * c) }
        }
    }
}
