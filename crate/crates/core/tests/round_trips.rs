mod common;

use common::*;
use sgp_core::datagen::{make_dataset, DifficultyPreset, SceneSpec};
use sgp_core::io::config::{load_config, save_config};
use sgp_core::io::manifest::{write_dataset, Manifest};
use sgp_core::io::ply::{load_ply, save_ply};
use sgp_core::io::run_dir::RunDir;
use sgp_core::io::tables::{load_labels, load_metrics, save_labels};
use sgp_core::sgp::{EtaSchedule, SgpConfig};
use sgp_core::student::init_weights;
use sgp_core::student::InitMode;
use sgp_core::teacher::TeacherKind;
use sgp_core::verifier::{write_metrics_csv, LoopMetrics, PseudoLabel};

#[test]
fn dataset_directory_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let preset = DifficultyPreset::calibrated();
    let scene = SceneSpec {
        points: 2000,
        ..preset.scene
    };
    let data = make_dataset(3, 2, &scene, &preset.pair, 8).unwrap();
    let manifest_path = write_dataset(&data, dir.path()).unwrap();
    assert_eq!(data.truth.audit().exports(), 5);
    assert_eq!(data.truth.audit().violations(), 0);

    let manifest = Manifest::load(&manifest_path).unwrap();
    let pairs = manifest.load_pairs(|_| true).unwrap();
    for (orig, back) in data.all_pairs().zip(&pairs) {
        assert_eq!(orig.id, back.id);
        assert_eq!(orig.a.points, back.a.points);
        assert_eq!(orig.b.points, back.b.points);
    }
    assert_eq!(manifest.truth_reads(), 0);
    let truth = manifest.ground_truth().unwrap();
    assert_eq!(manifest.truth_reads(), 1);
    assert_eq!(truth.len(), 5);
    assert!(data.all_pairs().all(|p| truth.contains(&p.id)));
}

#[test]
fn ply_with_normals_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let mut cloud = random_oriented_cloud(&mut rng(5), 200);
    cloud.points[0] = V::new(1.0 / 3.0, -1e-300, 7e12);
    let path = dir.path().join("c.ply");
    save_ply(&cloud, &path).unwrap();
    let back = load_ply(&path).unwrap();
    assert_eq!(back.points, cloud.points);
    assert_eq!(back.normals, cloud.normals);
}

#[test]
fn run_directory_artifacts_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let run = RunDir::create(dir.path().join("run")).unwrap();

    let cfg = SgpConfig {
        iterations: 7,
        retrain: true,
        eta_schedule: EtaSchedule::constant(0.25),
        max_anchors_per_pair: Some(64),
        hidden: vec![32, 8, 12],
        seed: u64::MAX,
        ..SgpConfig::default()
    };
    let mut cfg = cfg;
    cfg.teacher.kind = TeacherKind::HornDirect;
    cfg.loss.m_n = 1.234_567_890_123;
    save_config(&cfg, run.config_path()).unwrap();
    assert_eq!(load_config(run.config_path()).unwrap(), cfg);
    assert!(RunDir::open(run.root()).is_ok());

    let model = init_weights(&cfg.dims(), 11, InitMode::Fresh, true).unwrap();
    run.save_checkpoint(3, &model).unwrap();
    assert_eq!(run.load_checkpoint(3).unwrap(), model);

    let mut r = rng(6);
    let labels: Vec<PseudoLabel> = (0..4)
        .map(|i| {
            if i == 2 {
                return PseudoLabel::no_model(format!("train_{i:04}"));
            }
            PseudoLabel {
                transform: random_transform(&mut r, 1.0),
                has_model: true,
                inlier_rate: 0.1 * i as f64 + 1.0 / 7.0,
                overlap_ratio: 0.3,
                verified: i % 2 == 0,
                skip: i == 3,
                ..PseudoLabel::no_model(format!("train_{i:04}"))
            }
        })
        .collect();
    save_labels(&labels, run.iteration_labels_path(0)).unwrap();
    assert_eq!(load_labels(run.iteration_labels_path(0)).unwrap(), labels);

    let rows = vec![LoopMetrics {
        iteration: 1,
        plsr: 200.0 / 3.0,
        plir: None,
        train_recall: Some(0.1),
        test_recall: Some(12.5),
    }];
    write_metrics_csv(&rows, std::fs::File::create(run.metrics_path()).unwrap()).unwrap();
    assert_eq!(load_metrics(run.metrics_path()).unwrap(), rows);
}
