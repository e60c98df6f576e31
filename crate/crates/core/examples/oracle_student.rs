//! Trains the student on exact transforms and compares recall with FPFH.
//!
//! `cargo run --release -p sgp-core --example oracle_student -- [n_train] [n_test] [epochs]`

use sgp_core::datagen::{make_pair, make_scene, DifficultyPreset, RegistrationPair, SceneSpec};
use sgp_core::sgp::{evaluate, prepare_pairs, Descriptor, SgpConfig};
use sgp_core::student::{init_weights, train_student, InitMode, TrainConfig, TrainingPair};
use sgp_core::matching::mutual_matches;
use sgp_core::sgp::PreparedPair;
use sgp_core::student::{embed, MlpDescriptor};
use sgp_core::geometry::RigidTransform;
use sgp_core::truth::GroundTruth;

fn inlier_fraction(pairs: &[PreparedPair], labels: &[RigidTransform], model: Option<&MlpDescriptor>) -> (f64, f64) {
    let mut frac = 0.0;
    let mut count = 0.0;
    for (p, t) in pairs.iter().zip(labels) {
        let (da, db) = match model {
            None => (p.a.descriptor_set().unwrap(), p.b.descriptor_set().unwrap()),
            Some(m) => (
                embed(m, &p.inputs_a, Some(&p.valid_a)).unwrap().descriptors,
                embed(m, &p.inputs_b, Some(&p.valid_b)).unwrap().descriptors,
            ),
        };
        let c = mutual_matches(&da, &db).unwrap();
        let good = c
            .iter()
            .filter(|c| (t.apply(&p.a.cloud.points[c.index_a]) - p.b.cloud.points[c.index_b]).norm() < 0.07)
            .count();
        frac += good as f64 / c.len().max(1) as f64;
        count += good as f64;
    }
    (100.0 * frac / pairs.len() as f64, count / pairs.len() as f64)
}
use sgp_core::verifier::Tolerances;

fn main() -> sgp_core::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let n_train: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(40);
    let n_test: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(20);
    let epochs: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(20);
    let env = |k: &str, d: f64| std::env::var(k).ok().and_then(|s| s.parse().ok()).unwrap_or(d);
    let mut preset = DifficultyPreset::calibrated();
    preset.pair.noise_sigma = env("NOISE", preset.pair.noise_sigma);
    preset.pair.clutter_fraction = env("CLUTTER", preset.pair.clutter_fraction);
    preset.pair.overlap.0 = env("OVMIN", preset.pair.overlap.0);
    preset.scene.planes.count = env("PLANES", preset.scene.planes.count as f64) as usize;
    preset.scene.boxes.count = env("BOXES", preset.scene.boxes.count as f64) as usize;
    preset.scene.cylinders.count = env("CYLS", preset.scene.cylinders.count as f64) as usize;
    preset.scene.spheres.count = env("SPHERES", preset.scene.spheres.count as f64) as usize;
    preset.scene.points = env("POINTS", preset.scene.points as f64) as usize;
    let mut truth = GroundTruth::new();
    let mut pairs = Vec::new();
    let mut labels = Vec::new();
    for i in 0..n_train + n_test {
        let scene = make_scene(&SceneSpec { seed: 1000 + i as u64, ..preset.scene })?;
        let g = make_pair(&scene, &preset.pair, 5000 + i as u64)?;
        let id = format!("p{i}");
        truth.insert(id.clone(), g.t_gt);
        labels.push(g.t_gt);
        pairs.push(RegistrationPair { id, a: g.a, b: g.b });
    }
    let mut cfg = SgpConfig::default();
    cfg.optimizer.learning_rate = env("LR", cfg.optimizer.learning_rate);
    cfg.loss.m_n = env("MN", cfg.loss.m_n);
    cfg.loss.m = env("M", cfg.loss.m);
    cfg.loss.m_p = env("MP", cfg.loss.m_p);
    cfg.loss.lambda_n = env("LN", cfg.loss.lambda_n);
    cfg.loss.negatives_per_anchor = env("NEG", 4.0) as usize;
    cfg.loss.lambda_p = env("LP", cfg.loss.lambda_p);
    cfg.loss.lambda = env("LT", cfg.loss.lambda);
    cfg.d_f = env("DF", 16.0) as usize;
    cfg.hidden = vec![env("HIDDEN", 64.0) as usize; 2];
    let mut prepared = prepare_pairs(&pairs, &cfg.fpfh)?;
    if std::env::var("SQRT").is_ok() {
        for p in &mut prepared {
            p.inputs_a.iter_mut().chain(p.inputs_b.iter_mut()).for_each(|v| *v = v.sqrt());
        }
    }
    let (train, test) = prepared.split_at(n_train);
    let tol = Tolerances::default();
    println!("fpfh train {:.1} test {:.1}", evaluate(Descriptor::Fpfh, train, &truth, &cfg, &tol)?, evaluate(Descriptor::Fpfh, test, &truth, &cfg, &tol)?);
    let (tr_l, te_l) = labels.split_at(n_train);
    println!("fpfh inliers train {:?} test {:?}", inlier_fraction(train, tr_l, None), inlier_fraction(test, te_l, None));
    let tp: Vec<TrainingPair> = train
        .iter()
        .zip(&labels)
        .map(|(p, l)| TrainingPair {
            points_a: &p.a.cloud.points,
            inputs_a: &p.inputs_a,
            points_b: &p.b.cloud.points,
            inputs_b: &p.inputs_b,
            label: *l,
        })
        .collect();
    let mean_loss = |m: &MlpDescriptor| -> f64 {
        let sc = sgp_core::student::SamplingConfig { negatives_per_anchor: cfg.loss.negatives_per_anchor, max_anchors: Some(512) };
        let mut total = 0.0;
        for (k, p) in tp.iter().enumerate() {
            let b = sgp_core::student::generate_training_pairs(p, 33, 0.07, &sc, 99 + k as u64).unwrap();
            total += sgp_core::student::loss(m, &b, &cfg.loss).unwrap();
        }
        total / tp.len() as f64
    };
    let ident = MlpDescriptor::new(
        vec![sgp_core::student::Layer { weights: nalgebra::DMatrix::identity(33, 33), bias: nalgebra::DVector::zeros(33) }],
        true,
    )?;
    println!("identity loss {:.3}", mean_loss(&ident));
    println!("identity inliers train {:?}", inlier_fraction(train, tr_l, Some(&ident)));
    let init = init_weights(&cfg.dims(), 7, InitMode::Fresh, true)?;
    let mut model = init;
    let rounds = env("ROUNDS", 1.0) as usize;
    for r in 0..rounds {
        let tc = TrainConfig {
            epochs,
            optimizer: cfg.optimizer,
            loss: cfg.loss,
            max_anchors_per_pair: Some(env("ANCHORS", 128.0) as usize),
            c_bar: cfg.c_bar(),
        };
        let rep = train_student(&model, &tp, &tc, 11 + r as u64)?;
        model = rep.model;
        let l: Vec<String> = rep.epoch_losses.iter().map(|v| format!("{v:.3}")).collect();
        println!("losses {}", l.join(" "));
        println!("trained loss {:.3}", mean_loss(&model));
        println!("learned inliers train {:?} test {:?}", inlier_fraction(train, tr_l, Some(&model)), inlier_fraction(test, te_l, Some(&model)));
        println!(
            "round {r} learned train {:.1} test {:.1}",
            evaluate(Descriptor::Learned(&model), train, &truth, &cfg, &tol)?,
            evaluate(Descriptor::Learned(&model), test, &truth, &cfg, &tol)?
        );
    }
    Ok(())
}
