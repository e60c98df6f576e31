//! Bootstrap statistics for a difficulty preset: recall, overlap of correct
//! versus wrong labels, and verifier precision.
//!
//! Preset fields are overridden through environment variables.

use rayon::prelude::*;
use sgp_core::datagen::{make_pair, make_scene, DifficultyPreset, PrimitiveRange, RegistrationPair, SceneSpec};
use sgp_core::sgp::{prepare_pair, register_pair, Descriptor, SgpConfig};
use sgp_core::teacher::TeacherKind;
use sgp_core::verifier::{label_correct, overlap_ratio, Tolerances};

fn env(k: &str, d: f64) -> f64 {
    std::env::var(k).ok().and_then(|s| s.parse().ok()).unwrap_or(d)
}

fn range(prefix: &str, r: PrimitiveRange) -> PrimitiveRange {
    PrimitiveRange::new(
        env(&format!("{prefix}_N"), r.count as f64) as usize,
        env(&format!("{prefix}_MIN"), r.size_min),
        env(&format!("{prefix}_MAX"), r.size_max),
    )
}

fn main() -> sgp_core::Result<()> {
    let n = env("PAIRS", 60.0) as usize;
    let mut p = DifficultyPreset::calibrated();
    p.scene.planes = range("PL", p.scene.planes);
    p.scene.spheres = range("SP", p.scene.spheres);
    p.scene.cylinders = range("CY", p.scene.cylinders);
    p.scene.boxes = range("BX", p.scene.boxes);
    p.scene.points = env("POINTS", p.scene.points as f64) as usize;
    p.scene.extent = env("EXTENT", p.scene.extent);
    p.pair.rotation_deg.1 = env("ROT", p.pair.rotation_deg.1);
    p.pair.translation.1 = env("TRANS", p.pair.translation.1);
    p.pair.overlap = (env("OVMIN", p.pair.overlap.0), env("OVMAX", p.pair.overlap.1));
    p.pair.noise_sigma = env("NOISE", p.pair.noise_sigma);
    p.pair.clutter_fraction = env("CLUTTER", p.pair.clutter_fraction);
    println!("{p:?}");
    let mut cfg = SgpConfig::default();
    if std::env::var("HORN").is_ok() {
        cfg.teacher.kind = TeacherKind::HornDirect;
    }
    let tol = Tolerances::default();
    let t0 = std::time::Instant::now();
    let rows: Vec<(bool, f64, f64, usize, bool)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let scene = make_scene(&SceneSpec { seed: 1000 + i as u64, ..p.scene }).unwrap();
            let g = make_pair(&scene, &p.pair, 5000 + i as u64).unwrap();
            let pair = RegistrationPair { id: format!("p{i}"), a: g.a, b: g.b };
            let prep = prepare_pair(&pair, &cfg.fpfh).unwrap();
            let reg = register_pair(&prep, Descriptor::Fpfh, &cfg.teacher, i as u64).unwrap();
            let gt_overlap = overlap_ratio(&g.t_gt, &prep.a.cloud, &prep.b.cloud, 0.07).unwrap();
            match reg.transform {
                Some(t) => {
                    let ov = overlap_ratio(&t, &prep.a.cloud, &prep.b.cloud, 0.07).unwrap();
                    (label_correct(&t, &g.t_gt, &tol), ov, gt_overlap, prep.a.cloud.len(), g.overlap_tuned)
                }
                None => (false, 0.0, gt_overlap, prep.a.cloud.len(), g.overlap_tuned),
            }
        })
        .collect();
    let correct = rows.iter().filter(|r| r.0).count();
    println!("recall {:.1} ({correct}/{n}) in {:.1}s", 100.0 * correct as f64 / n as f64, t0.elapsed().as_secs_f64());
    let mean_pts = rows.iter().map(|r| r.3).sum::<usize>() / n;
    println!("voxel points mean {mean_pts}, untuned overlaps {}", rows.iter().filter(|r| !r.4).count());
    let mut good: Vec<f64> = rows.iter().filter(|r| r.0).map(|r| r.1).collect();
    let mut bad: Vec<f64> = rows.iter().filter(|r| !r.0).map(|r| r.1).collect();
    good.sort_by(f64::total_cmp);
    bad.sort_by(f64::total_cmp);
    println!("overlap correct {:?}", good.iter().map(|v| format!("{v:.2}")).collect::<Vec<_>>());
    println!("overlap wrong   {:?}", bad.iter().map(|v| format!("{v:.2}")).collect::<Vec<_>>());
    for eta in [0.1, 0.2, 0.3] {
        let s: Vec<_> = rows.iter().filter(|r| r.1 >= eta).collect();
        let ok = s.iter().filter(|r| r.0).count();
        println!("eta {eta}: survive {} precision {:.1}", s.len(), 100.0 * ok as f64 / s.len().max(1) as f64);
    }
    Ok(())
}
