//! Measures bootstrap recall and stage timings for the difficulty preset.
//!
//! `cargo run --release -p sgp-core --example calibrate -- [n_pairs] [seed] [iterations]`

use std::time::Instant;

use sgp_core::datagen::{make_dataset, DifficultyPreset};
use sgp_core::sgp::{evaluate, prepare_pairs, run_sgp, Descriptor, IterationSnapshot, LoopObserver, MetricsExtra, PreparedPair, SgpConfig};
use sgp_core::truth::GroundTruth;
use sgp_core::verifier::{label_recall, Tolerances};

struct Report<'a> {
    test: &'a [PreparedPair],
    truth: &'a GroundTruth,
    cfg: &'a SgpConfig,
}

impl LoopObserver for Report<'_> {
    fn iteration(&mut self, s: &IterationSnapshot<'_>) -> sgp_core::Result<MetricsExtra> {
        let tol = Tolerances::default();
        let train = label_recall(s.labels_out, self.truth, &tol)?;
        let test = evaluate(Descriptor::Learned(s.model), self.test, self.truth, self.cfg, &tol)?;
        println!("iter {} verified {} train {train:.1} test {test:.1}", s.iteration, s.verified.len());
        Ok(MetricsExtra { plir: None, train_recall: Some(train), test_recall: Some(test) })
    }
}

fn main() -> sgp_core::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let n: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(40);
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1);
    let iterations: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0);
    let n_test = (n / 4).max(1);
    let preset = DifficultyPreset::calibrated();
    let t = Instant::now();
    let data = make_dataset(n, n_test, &preset.scene, &preset.pair, seed)?;
    println!("datagen {:.1}s", t.elapsed().as_secs_f64());
    let mut cfg = SgpConfig { seed, ..SgpConfig::default() };
    let t = Instant::now();
    let train = prepare_pairs(&data.train, &cfg.fpfh)?;
    let test = prepare_pairs(&data.test, &cfg.fpfh)?;
    let sizes: Vec<usize> = train.iter().map(|p| p.a.cloud.len()).collect();
    println!(
        "prepare {:.1}s voxel points min {} mean {} max {}",
        t.elapsed().as_secs_f64(),
        sizes.iter().min().unwrap(),
        sizes.iter().sum::<usize>() / sizes.len(),
        sizes.iter().max().unwrap()
    );
    let tol = Tolerances::default();
    let t = Instant::now();
    let r_train = evaluate(Descriptor::Fpfh, &train, &data.truth, &cfg, &tol)?;
    let r_test = evaluate(Descriptor::Fpfh, &test, &data.truth, &cfg, &tol)?;
    println!("fpfh recall train {r_train:.1} test {r_test:.1} ({:.1}s)", t.elapsed().as_secs_f64());
    if iterations > 0 {
        cfg.iterations = iterations;
        cfg.epochs_first = std::env::var("EPOCHS_FIRST").ok().and_then(|s| s.parse().ok()).unwrap_or(20);
        cfg.epochs_rest = std::env::var("EPOCHS_REST").ok().and_then(|s| s.parse().ok()).unwrap_or(10);
        cfg.max_anchors_per_pair = Some(std::env::var("ANCHORS").ok().and_then(|s| s.parse().ok()).unwrap_or(128));
        if std::env::var("HORN").is_ok() {
            cfg.teacher.kind = sgp_core::teacher::TeacherKind::HornDirect;
        }
        let t = Instant::now();
        let mut obs = Report { test: &test, truth: &data.truth, cfg: &cfg };
        let state = run_sgp(&train, &cfg, &mut obs)?;
        for m in &state.metrics {
            println!("{m:?}");
        }
        println!("sgp {:.1}s losses {:?}", t.elapsed().as_secs_f64(), state.last_epoch_loss);
    }
    Ok(())
}
