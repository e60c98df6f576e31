//! Seeded synthetic scenes and partially overlapping fragment pairs with
//! hidden ground-truth transforms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Result, SgpError};
use crate::geometry::{axis_angle_matrix, Mat3, PointCloud, RigidTransform, Vec3};
use crate::seed::derive;
use crate::truth::GroundTruth;
use crate::verifier::overlap_ratio;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrimitiveRange {
    pub count: usize,
    /// Characteristic size bounds in meters (half-extent, radius).
    pub size_min: f64,
    pub size_max: f64,
}

impl PrimitiveRange {
    pub const NONE: Self = Self {
        count: 0,
        size_min: 0.1,
        size_max: 0.1,
    };

    pub fn new(count: usize, size_min: f64, size_max: f64) -> Self {
        Self { count, size_min, size_max }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneSpec {
    pub seed: u64,
    pub planes: PrimitiveRange,
    pub spheres: PrimitiveRange,
    pub cylinders: PrimitiveRange,
    pub boxes: PrimitiveRange,
    /// Surface samples over the whole scene, spread proportionally to area.
    pub points: usize,
    /// Primitive centers are drawn from `[-extent, extent]^2 x [z_min, z_max]`.
    pub extent: f64,
    pub z_range: (f64, f64),
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.points < 500 {
            return Err(SgpError::invalid(format!("scene needs at least 500 points, got {}", self.points)));
        }
        let ranges = [self.planes, self.spheres, self.cylinders, self.boxes];
        if ranges.iter().all(|r| r.count == 0) {
            return Err(SgpError::invalid("scene needs at least one primitive"));
        }
        if ranges.iter().any(|r| !(r.size_min > 0.0 && r.size_max >= r.size_min)) {
            return Err(SgpError::invalid("primitive sizes must be positive with min <= max"));
        }
        let (z0, z1) = self.z_range;
        if !(z0 >= 1.0 && z1 <= 5.0 && z0 <= z1) || !(self.extent >= 0.0) {
            return Err(SgpError::invalid("primitive centers must lie at 1-5 m depth"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Primitive {
    /// Rectangle `center + s u + t v`, `|s| <= half_u`, `|t| <= half_v`.
    Plane { center: Vec3, u: Vec3, v: Vec3, half_u: f64, half_v: f64 },
    Sphere { center: Vec3, radius: f64 },
    /// Lateral surface around `axis` through `center`.
    Cylinder { center: Vec3, axis: Vec3, radius: f64, half_height: f64 },
    /// Box surface; columns of `frame` are its axes.
    Box { center: Vec3, frame: Mat3, half: Vec3 },
}

impl Primitive {
    pub fn area(&self) -> f64 {
        match *self {
            Primitive::Plane { half_u, half_v, .. } => 4.0 * half_u * half_v,
            Primitive::Sphere { radius, .. } => 4.0 * std::f64::consts::PI * radius * radius,
            Primitive::Cylinder { radius, half_height, .. } => 4.0 * std::f64::consts::PI * radius * half_height,
            Primitive::Box { half, .. } => 8.0 * (half.x * half.y + half.y * half.z + half.x * half.z),
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vec3 {
        match *self {
            Primitive::Plane { center, u, v, half_u, half_v } => {
                center + u * rng.random_range(-half_u..=half_u) + v * rng.random_range(-half_v..=half_v)
            }
            Primitive::Sphere { center, radius } => center + unit_vector(rng) * radius,
            Primitive::Cylinder { center, axis, radius, half_height } => {
                let (e1, e2) = orthonormal_complement(&axis);
                let phi = rng.random_range(0.0..std::f64::consts::TAU);
                center + (e1 * phi.cos() + e2 * phi.sin()) * radius + axis * rng.random_range(-half_height..=half_height)
            }
            Primitive::Box { center, frame, half } => {
                let faces = [half.y * half.z, half.x * half.z, half.x * half.y];
                let total = faces.iter().sum::<f64>();
                let mut pick = rng.random_range(0.0..total);
                let mut axis = 2;
                for (k, f) in faces.iter().enumerate() {
                    if pick < *f {
                        axis = k;
                        break;
                    }
                    pick -= f;
                }
                let mut local = Vec3::new(
                    rng.random_range(-half.x..=half.x),
                    rng.random_range(-half.y..=half.y),
                    rng.random_range(-half.z..=half.z),
                );
                local[axis] = if rng.random_bool(0.5) { half[axis] } else { -half[axis] };
                center + frame * local
            }
        }
    }
}

fn unit_vector(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        );
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

fn orthonormal_complement(a: &Vec3) -> (Vec3, Vec3) {
    let helper = if a.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let e1 = a.cross(&helper).normalize();
    (e1, a.cross(&e1))
}

fn random_rotation(rng: &mut impl Rng) -> Mat3 {
    axis_angle_matrix(unit_vector(rng), rng.random_range(0.0..std::f64::consts::PI))
}

pub fn make_primitives(spec: &SceneSpec) -> Result<Vec<Primitive>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let center = |rng: &mut ChaCha8Rng| {
        Vec3::new(
            rng.random_range(-spec.extent..=spec.extent),
            rng.random_range(-spec.extent..=spec.extent),
            rng.random_range(spec.z_range.0..=spec.z_range.1),
        )
    };
    let size = |r: &PrimitiveRange, rng: &mut ChaCha8Rng| rng.random_range(r.size_min..=r.size_max);
    let mut prims = Vec::new();
    for _ in 0..spec.planes.count {
        let c = center(&mut rng);
        let frame = random_rotation(&mut rng);
        prims.push(Primitive::Plane {
            center: c,
            u: frame.column(0).into(),
            v: frame.column(1).into(),
            half_u: size(&spec.planes, &mut rng),
            half_v: size(&spec.planes, &mut rng),
        });
    }
    for _ in 0..spec.spheres.count {
        prims.push(Primitive::Sphere {
            center: center(&mut rng),
            radius: size(&spec.spheres, &mut rng),
        });
    }
    for _ in 0..spec.cylinders.count {
        prims.push(Primitive::Cylinder {
            center: center(&mut rng),
            axis: unit_vector(&mut rng),
            radius: size(&spec.cylinders, &mut rng),
            half_height: 2.0 * size(&spec.cylinders, &mut rng),
        });
    }
    for _ in 0..spec.boxes.count {
        prims.push(Primitive::Box {
            center: center(&mut rng),
            frame: random_rotation(&mut rng),
            half: Vec3::new(size(&spec.boxes, &mut rng), size(&spec.boxes, &mut rng), size(&spec.boxes, &mut rng)),
        });
    }
    Ok(prims)
}

/// Area-proportional surface samples of `prims`.
pub fn sample_primitives(prims: &[Primitive], points: usize, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let areas: Vec<f64> = prims.iter().map(Primitive::area).collect();
    let total: f64 = areas.iter().sum();
    let mut counts: Vec<usize> = areas.iter().map(|a| (a / total * points as f64).floor() as usize).collect();
    // hand the rounding remainder to the largest primitives, in order
    let mut by_area: Vec<usize> = (0..prims.len()).collect();
    by_area.sort_by(|&i, &j| areas[j].total_cmp(&areas[i]).then(i.cmp(&j)));
    let missing = points - counts.iter().sum::<usize>();
    for k in 0..missing {
        counts[by_area[k % by_area.len()]] += 1;
    }
    let mut out = Vec::with_capacity(points);
    for (p, &n) in prims.iter().zip(&counts) {
        for _ in 0..n {
            out.push(p.sample(&mut rng));
        }
    }
    PointCloud::from_points(out)
}

pub fn make_scene(spec: &SceneSpec) -> Result<PointCloud> {
    let prims = make_primitives(spec)?;
    Ok(sample_primitives(&prims, spec.points, derive(spec.seed, &[1])))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairSpec {
    pub rotation_deg: (f64, f64),
    pub translation: (f64, f64),
    /// Target overlap drawn uniformly from this range per pair.
    pub overlap: (f64, f64),
    pub noise_sigma: f64,
    /// Clutter points as a fraction of the second fragment's size.
    pub clutter_fraction: f64,
    /// Distance at which overlap is measured, meters.
    pub overlap_tau: f64,
}

impl PairSpec {
    pub fn validate(&self) -> Result<()> {
        let (o0, o1) = self.overlap;
        if !(o0 > 0.0 && o0 <= o1 && o1 <= 1.0) {
            return Err(SgpError::invalid("overlap fractions must lie in (0, 1]"));
        }
        if !(0.0..1.0).contains(&self.clutter_fraction) {
            return Err(SgpError::invalid("clutter fraction must lie in [0, 1)"));
        }
        let (r0, r1) = self.rotation_deg;
        let (t0, t1) = self.translation;
        if !(0.0 <= r0 && r0 <= r1 && r1 <= 180.0 && 0.0 <= t0 && t0 <= t1) {
            return Err(SgpError::invalid("transform magnitude ranges must be ordered and nonnegative"));
        }
        if !(self.noise_sigma >= 0.0) || !(self.overlap_tau > 0.0) {
            return Err(SgpError::invalid("noise must be nonnegative and overlap tau positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedPair {
    pub a: PointCloud,
    pub b: PointCloud,
    pub t_gt: RigidTransform,
    pub target_overlap: f64,
    /// `overlap_ratio(t_gt, a, b, tau)`.
    pub achieved_overlap: f64,
    /// False when 100 tuning attempts did not reach the target within 0.05.
    pub overlap_tuned: bool,
}

pub const OVERLAP_TOLERANCE: f64 = 0.05;
const MAX_TUNING_ATTEMPTS: usize = 100;

/// Crops two fragments from `scene` by rank along a random direction.
///
/// With `L = N / (2 - o)` points per fragment, A keeps ranks `[0, L)` and
/// the source of B ranks `[(1 - o) L, (2 - o) L)`. `o` is bisected until the
/// overlap measured at the true transform is within 0.05 of the target. B is
/// then moved by `t_gt` (a rotation about its centroid followed by a
/// translation), perturbed by Gaussian noise, and cluttered with points drawn
/// uniformly from the scene's bounding box.
pub fn make_pair(scene: &PointCloud, spec: &PairSpec, seed: u64) -> Result<GeneratedPair> {
    spec.validate()?;
    let n = scene.len();
    if n < 4 {
        return Err(SgpError::invalid("scene too small to crop"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = rng.random_range(spec.overlap.0..=spec.overlap.1);
    let dir = unit_vector(&mut rng);
    let mut order: Vec<usize> = (0..n).collect();
    let key: Vec<f64> = scene.points.iter().map(|p| p.dot(&dir)).collect();
    order.sort_by(|&i, &j| key[i].total_cmp(&key[j]).then(i.cmp(&j)));

    let axis = unit_vector(&mut rng);
    let angle = rng.random_range(spec.rotation_deg.0..=spec.rotation_deg.1).to_radians();
    let offset = unit_vector(&mut rng) * rng.random_range(spec.translation.0..=spec.translation.1);
    let noise = Normal::new(0.0, spec.noise_sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");
    let jitter: Vec<Vec3> = (0..n)
        .map(|_| {
            if spec.noise_sigma == 0.0 {
                Vec3::zeros()
            } else {
                Vec3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng))
            }
        })
        .collect();
    let (lo, hi) = scene.bounds().expect("nonempty scene");
    let clutter_pool: Vec<Vec3> = (0..n)
        .map(|_| {
            Vec3::new(
                rng.random_range(lo.x..=hi.x),
                rng.random_range(lo.y..=hi.y),
                rng.random_range(lo.z..=hi.z),
            )
        })
        .collect();

    let build = |o: f64| -> Result<(PointCloud, PointCloud, RigidTransform)> {
        let len = ((n as f64 / (2.0 - o)).round() as usize).clamp(1, n);
        let start = (n - len).min(((1.0 - o) * len as f64).round() as usize);
        let a: Vec<Vec3> = order[..len].iter().map(|&i| scene.points[i]).collect();
        let src = &order[start..start + len];
        let centroid = src.iter().map(|&i| scene.points[i]).sum::<Vec3>() / len as f64;
        let rotation = axis_angle_matrix(axis, angle);
        let t = RigidTransform {
            rotation,
            translation: centroid - rotation * centroid + offset,
        };
        let clutter = (spec.clutter_fraction * len as f64).round() as usize;
        let b: Vec<Vec3> = src
            .iter()
            .map(|&i| t.apply(&scene.points[i]) + jitter[i])
            .chain(clutter_pool[..clutter].iter().map(|p| t.apply(p)))
            .collect();
        Ok((PointCloud::from_points(a), PointCloud::from_points(b), t))
    };
    let measure = |o: f64| -> Result<(f64, (PointCloud, PointCloud, RigidTransform))> {
        let parts = build(o)?;
        Ok((overlap_ratio(&parts.2, &parts.0, &parts.1, spec.overlap_tau)?, parts))
    };

    let (mut lo_o, mut hi_o) = (0.0f64, 1.0f64);
    let mut o = target;
    let mut best: Option<(f64, (PointCloud, PointCloud, RigidTransform))> = None;
    for _ in 0..MAX_TUNING_ATTEMPTS {
        let (achieved, parts) = measure(o)?;
        let err = (achieved - target).abs();
        if best.as_ref().is_none_or(|(b, _)| err < (b - target).abs()) {
            best = Some((achieved, parts));
        }
        if err <= 0.5 * OVERLAP_TOLERANCE || (hi_o - lo_o) < 1e-6 {
            break;
        }
        if achieved > target {
            hi_o = o;
        } else {
            lo_o = o;
        }
        o = 0.5 * (lo_o + hi_o);
    }
    let (achieved, (a, b, t_gt)) = best.expect("at least one attempt");
    Ok(GeneratedPair {
        a,
        b,
        t_gt,
        target_overlap: target,
        achieved_overlap: achieved,
        overlap_tuned: (achieved - target).abs() <= OVERLAP_TOLERANCE,
    })
}

/// A fragment pair as the pipeline sees it: no ground truth attached.
#[derive(Debug, Clone)]
pub struct RegistrationPair {
    pub id: String,
    pub a: PointCloud,
    pub b: PointCloud,
}

#[derive(Debug, Clone)]
pub struct PairDataset {
    pub train: Vec<RegistrationPair>,
    pub test: Vec<RegistrationPair>,
    /// Evaluation-only transforms keyed by pair id.
    pub truth: GroundTruth,
    /// `(pair id, achieved overlap, tuned)` in train-then-test order.
    pub overlaps: Vec<(String, f64, bool)>,
}

impl PairDataset {
    pub fn all_pairs(&self) -> impl Iterator<Item = &RegistrationPair> {
        self.train.iter().chain(&self.test)
    }
}

pub fn pair_id(split: &str, index: usize) -> String {
    format!("{split}_{index:04}")
}

const SPLIT_TRAIN: u64 = 0x7472;
const SPLIT_TEST: u64 = 0x7465;

/// Each pair crops its own scene; train and test draw from disjoint seed streams.
pub fn make_dataset(n_train: usize, n_test: usize, scene: &SceneSpec, pair: &PairSpec, seed: u64) -> Result<PairDataset> {
    scene.validate()?;
    pair.validate()?;
    use rayon::prelude::*;
    let jobs: Vec<(String, u64, usize)> = (0..n_train)
        .map(|i| (pair_id("train", i), SPLIT_TRAIN, i))
        .chain((0..n_test).map(|i| (pair_id("test", i), SPLIT_TEST, i)))
        .collect();
    let generated: Vec<(String, GeneratedPair)> = jobs
        .par_iter()
        .map(|(id, split, i)| {
            let scene_spec = SceneSpec {
                seed: derive(seed, &[*split, *i as u64, 0]),
                ..*scene
            };
            let cloud = make_scene(&scene_spec)?;
            Ok((id.clone(), make_pair(&cloud, pair, derive(seed, &[*split, *i as u64, 1]))?))
        })
        .collect::<Result<_>>()?;
    let mut truth = GroundTruth::new();
    let mut overlaps = Vec::with_capacity(generated.len());
    let mut train = Vec::with_capacity(n_train);
    let mut test = Vec::with_capacity(n_test);
    for (k, (id, g)) in generated.into_iter().enumerate() {
        truth.insert(id.clone(), g.t_gt);
        overlaps.push((id.clone(), g.achieved_overlap, g.overlap_tuned));
        let p = RegistrationPair { id, a: g.a, b: g.b };
        if k < n_train {
            train.push(p);
        } else {
            test.push(p);
        }
    }
    Ok(PairDataset {
        train,
        test,
        truth,
        overlaps,
    })
}

/// Scene and pair settings for the committed difficulty preset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DifficultyPreset {
    pub scene: SceneSpec,
    pub pair: PairSpec,
}

impl DifficultyPreset {
    /// Calibrated so FPFH with cross check plus RANSAC registers 60-85% of pairs.
    pub fn calibrated() -> Self {
        Self {
            scene: SceneSpec {
                seed: 0,
                planes: PrimitiveRange::new(2, 0.2, 0.4),
                spheres: PrimitiveRange::new(4, 0.1, 0.25),
                cylinders: PrimitiveRange::new(4, 0.05, 0.15),
                boxes: PrimitiveRange::new(4, 0.08, 0.25),
                points: 12_000,
                extent: 2.0,
                z_range: (2.5, 3.5),
            },
            pair: PairSpec {
                rotation_deg: (0.0, 60.0),
                translation: (0.0, 0.5),
                overlap: (0.3, 0.9),
                noise_sigma: 0.005,
                clutter_fraction: 0.1,
                overlap_tau: 0.07,
            },
        }
    }

    pub fn easy() -> Self {
        let c = Self::calibrated();
        Self {
            scene: c.scene,
            pair: PairSpec {
                rotation_deg: (0.0, 20.0),
                translation: (0.0, 0.3),
                overlap: (0.8, 0.8),
                noise_sigma: 0.0,
                clutter_fraction: 0.0,
                overlap_tau: 0.07,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::apply_transform;

    fn spec_with(planes: PrimitiveRange, spheres: PrimitiveRange) -> SceneSpec {
        SceneSpec {
            seed: 5,
            planes,
            spheres,
            cylinders: PrimitiveRange::NONE,
            boxes: PrimitiveRange::NONE,
            points: 1000,
            extent: 1.0,
            z_range: (1.0, 5.0),
        }
    }

    #[test]
    fn plane_samples_satisfy_plane_equation() {
        let spec = spec_with(PrimitiveRange::new(1, 0.5, 0.5), PrimitiveRange::NONE);
        let prims = make_primitives(&spec).unwrap();
        let Primitive::Plane { center, u, v, .. } = prims[0] else { panic!() };
        let n = u.cross(&v);
        let cloud = make_scene(&spec).unwrap();
        assert_eq!(cloud.len(), 1000);
        for p in &cloud.points {
            assert!(n.dot(&(p - center)).abs() < 1e-12);
        }
    }

    #[test]
    fn sphere_samples_lie_on_sphere() {
        let spec = spec_with(PrimitiveRange::NONE, PrimitiveRange::new(3, 0.2, 0.6));
        let prims = make_primitives(&spec).unwrap();
        let cloud = make_scene(&spec).unwrap();
        for p in &cloud.points {
            let ok = prims.iter().any(|pr| match pr {
                Primitive::Sphere { center, radius } => ((p - center).norm() - radius).abs() < 1e-12,
                _ => false,
            });
            assert!(ok);
        }
    }

    #[test]
    fn scenes_are_deterministic_and_in_front() {
        let spec = DifficultyPreset::calibrated().scene;
        let a = make_scene(&spec).unwrap();
        assert_eq!(a.points, make_scene(&spec).unwrap().points);
        assert_ne!(a.points, make_scene(&SceneSpec { seed: 1, ..spec }).unwrap().points);
        let prims = make_primitives(&spec).unwrap();
        for p in prims {
            let c = match p {
                Primitive::Plane { center, .. }
                | Primitive::Sphere { center, .. }
                | Primitive::Cylinder { center, .. }
                | Primitive::Box { center, .. } => center,
            };
            assert!((1.0..=5.0).contains(&c.z));
        }
        assert!(SceneSpec { points: 10, ..spec }.validate().is_err());
    }

    #[test]
    fn full_overlap_noiseless_pair_is_exact_copy() {
        let scene = make_scene(&DifficultyPreset::calibrated().scene).unwrap();
        let spec = PairSpec {
            overlap: (1.0, 1.0),
            noise_sigma: 0.0,
            clutter_fraction: 0.0,
            ..DifficultyPreset::calibrated().pair
        };
        let g = make_pair(&scene, &spec, 3).unwrap();
        assert_eq!(g.a.len(), scene.len());
        assert_eq!(g.b.points, apply_transform(&g.t_gt, &g.a).points);
        assert_eq!(g.achieved_overlap, 1.0);
    }

    #[test]
    fn overlap_hits_target_over_seeds() {
        let preset = DifficultyPreset::calibrated();
        let mut within = 0;
        for s in 0..50u64 {
            let scene = make_scene(&SceneSpec { seed: s, points: 4000, ..preset.scene }).unwrap();
            let g = make_pair(&scene, &preset.pair, 1000 + s).unwrap();
            let measured = overlap_ratio(&g.t_gt, &g.a, &g.b, preset.pair.overlap_tau).unwrap();
            assert_eq!(measured, g.achieved_overlap);
            if (measured - g.target_overlap).abs() <= OVERLAP_TOLERANCE {
                within += 1;
            }
        }
        assert_eq!(within, 50);
    }

    #[test]
    fn datasets_are_reproducible_and_disjoint() {
        let preset = DifficultyPreset::calibrated();
        let scene = SceneSpec { points: 2000, ..preset.scene };
        let d1 = make_dataset(3, 2, &scene, &preset.pair, 17).unwrap();
        let d2 = make_dataset(3, 2, &scene, &preset.pair, 17).unwrap();
        for (x, y) in d1.all_pairs().zip(d2.all_pairs()) {
            assert_eq!(x.id, y.id);
            assert_eq!(x.a.points, y.a.points);
            assert_eq!(x.b.points, y.b.points);
        }
        for tr in &d1.train {
            for te in &d1.test {
                assert_ne!(tr.a.points, te.a.points);
            }
        }
        assert_eq!(d1.truth.len(), 5);
        let empty = make_dataset(0, 2, &scene, &preset.pair, 17).unwrap();
        assert!(empty.train.is_empty());
        assert_eq!(empty.test.len(), 2);
    }
}
