use std::path::Path;

use anyhow::{bail, Context, Result};
use sgp_core::datagen::{make_dataset, DifficultyPreset, RegistrationPair};
use sgp_core::io::config::{load_config, save_config};
use sgp_core::io::manifest::{is_test_id, write_dataset, Manifest, ManifestRow};
use sgp_core::io::ply::load_ply;
use sgp_core::io::run_dir::{load_model, RunDir};
use sgp_core::io::tables::{load_labels, load_metrics, save_labels};
use sgp_core::sgp::{
    bootstrap, evaluate, iteration_metrics, prepare_pair, prepare_pairs, register_pair, run_sgp, Descriptor,
    IterationSnapshot, LoopObserver, MetricsExtra, SgpConfig,
};
use sgp_core::student::MlpDescriptor;
use sgp_core::verifier::{verify_labels, write_metrics_csv, PseudoLabel, Tolerances};

use crate::{
    BootstrapArgs, Cli, Command, ConfigArg, EvaluateArgs, ExportArgs, GenDataArgs, Preset, RegisterArgs, RunArgs, Split,
};

pub fn dispatch(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::GenData(a) => gen_data(a, seed),
        Command::Bootstrap(a) => bootstrap_cmd(a, seed),
        Command::Run(a) => run(a, seed),
        Command::Register(a) => register(a, seed),
        Command::Evaluate(a) => evaluate_cmd(a, seed),
        Command::ExportMetrics(a) => export_metrics(a),
    }
}

fn config(arg: &ConfigArg, seed: Option<u64>) -> Result<SgpConfig> {
    let mut cfg = match &arg.config {
        Some(p) => load_config(p).with_context(|| format!("loading config {}", p.display()))?,
        None => SgpConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn split_filter(split: Split) -> impl Fn(&ManifestRow) -> bool + Sync {
    move |r: &ManifestRow| match split {
        Split::Train => !is_test_id(&r.pair_id),
        Split::Test => is_test_id(&r.pair_id),
        Split::All => true,
    }
}

fn load_split(manifest: &Path, split: Split) -> Result<(Manifest, Vec<RegistrationPair>)> {
    let m = Manifest::load(manifest).with_context(|| format!("reading manifest {}", manifest.display()))?;
    let pairs = m.load_pairs(split_filter(split))?;
    if pairs.is_empty() {
        bail!("manifest {} has no pairs in the {split:?} split", manifest.display());
    }
    Ok((m, pairs))
}

fn gen_data(a: GenDataArgs, seed: Option<u64>) -> Result<()> {
    let mut preset = match a.preset {
        Preset::Calibrated => DifficultyPreset::calibrated(),
        Preset::Easy => DifficultyPreset::easy(),
    };
    if let Some(points) = a.points {
        preset.scene.points = points;
    }
    let data = make_dataset(a.train, a.test, &preset.scene, &preset.pair, seed.unwrap_or(0))?;
    let untuned = data.overlaps.iter().filter(|o| !o.2).count();
    if untuned > 0 {
        eprintln!("warning: {untuned} pairs missed their target overlap by more than 0.05");
    }
    let path = write_dataset(&data, &a.out)?;
    println!("{}", path.display());
    Ok(())
}

fn verified_copy(labels: &[PseudoLabel], eta: f64, cfg: &SgpConfig) -> Result<Vec<PseudoLabel>> {
    let mut out = labels.to_vec();
    verify_labels(&mut out, eta, cfg.verify_label)?;
    Ok(out)
}

fn bootstrap_cmd(a: BootstrapArgs, seed: Option<u64>) -> Result<()> {
    let cfg = config(&a.config, seed)?;
    let (_, pairs) = load_split(&a.manifest, a.split)?;
    let prepared = prepare_pairs(&pairs, &cfg.fpfh)?;
    let labels = bootstrap(&prepared, &cfg)?;
    let eta = cfg.eta_schedule.eta_at(1).context("eta schedule does not cover iteration 1")?;
    let labels = verified_copy(&labels, eta, &cfg)?;
    save_labels(&labels, &a.out)?;
    let ok = labels.iter().filter(|l| l.verified).count();
    println!("{} labels, {ok} verified at eta {eta}", labels.len());
    Ok(())
}

struct RunWriter<'a> {
    dir: &'a RunDir,
}

impl LoopObserver for RunWriter<'_> {
    fn iteration(&mut self, s: &IterationSnapshot<'_>) -> sgp_core::Result<MetricsExtra> {
        save_labels(s.labels_in, self.dir.iteration_labels_path(s.iteration - 1))?;
        self.dir.save_checkpoint(s.iteration, s.model)?;
        Ok(MetricsExtra::default())
    }
}

fn run(a: RunArgs, seed: Option<u64>) -> Result<()> {
    let mut cfg = config(&a.config, seed)?;
    if let Some(t) = a.iterations {
        cfg.iterations = t;
    }
    cfg.validate()?;
    let (_, pairs) = load_split(&a.manifest, Split::Train)?;
    let prepared = prepare_pairs(&pairs, &cfg.fpfh)?;
    let dir = RunDir::create(&a.out)?;
    save_config(&cfg, dir.config_path())?;
    let state = run_sgp(&prepared, &cfg, &mut RunWriter { dir: &dir })?;
    for d in &state.diagnostics {
        eprintln!("{d}");
    }
    let eta = cfg.eta_schedule.eta_at(cfg.iterations).context("eta schedule does not cover the last iteration")?;
    let last = verified_copy(&state.labels, eta, &cfg)?;
    save_labels(&last, dir.iteration_labels_path(cfg.iterations))?;
    save_labels(&last, dir.labels_path())?;
    write_metrics_csv(&state.metrics, std::io::BufWriter::new(std::fs::File::create(dir.metrics_path())?))?;
    println!("{}", dir.root().display());
    Ok(())
}

fn descriptor_model(path: &Option<std::path::PathBuf>) -> Result<Option<MlpDescriptor>> {
    path.as_ref()
        .map(|p| load_model(p).with_context(|| format!("reading checkpoint {}", p.display())))
        .transpose()
}

fn register(a: RegisterArgs, seed: Option<u64>) -> Result<()> {
    let cfg = config(&a.config, seed)?;
    let pair = RegistrationPair {
        id: "pair".into(),
        a: load_ply(&a.a).with_context(|| format!("reading {}", a.a.display()))?,
        b: load_ply(&a.b).with_context(|| format!("reading {}", a.b.display()))?,
    };
    let prepared = prepare_pair(&pair, &cfg.fpfh)?;
    let model = descriptor_model(&a.model)?;
    let desc = model.as_ref().map_or(Descriptor::Fpfh, Descriptor::Learned);
    let reg = register_pair(&prepared, desc, &cfg.teacher, cfg.seed)?;
    match reg.transform {
        Some(t) => {
            let cells: Vec<String> = t.to_row_major_12().iter().map(f64::to_string).collect();
            println!("{}", cells.join(" "));
            println!("inlier_rate {}", reg.inlier_rate);
        }
        None => println!("no model"),
    }
    Ok(())
}

fn evaluate_cmd(a: EvaluateArgs, seed: Option<u64>) -> Result<()> {
    let cfg = config(&a.config, seed)?;
    let (manifest, pairs) = load_split(&a.manifest, a.split)?;
    let truth = manifest.ground_truth()?;
    let prepared = prepare_pairs(&pairs, &cfg.fpfh)?;
    let model = descriptor_model(&a.model)?;
    let desc = model.as_ref().map_or(Descriptor::Fpfh, Descriptor::Learned);
    let r = evaluate(desc, &prepared, &truth, &cfg, &Tolerances::default())?;
    println!("recall {r}");
    Ok(())
}

fn export_metrics(a: ExportArgs) -> Result<()> {
    let dir = RunDir::open(&a.run)?;
    let cfg = load_config(dir.config_path())?;
    let mut rows = load_metrics(dir.metrics_path())?;
    let manifest = Manifest::load(&a.manifest).with_context(|| format!("reading manifest {}", a.manifest.display()))?;
    let truth = manifest.ground_truth()?;
    let test = prepare_pairs(&manifest.load_pairs(split_filter(Split::Test))?, &cfg.fpfh)?;
    let tol = Tolerances::default();
    for row in &mut rows {
        let t = row.iteration;
        let labels_in = load_labels(dir.iteration_labels_path(t - 1))?;
        let labels_out = load_labels(dir.iteration_labels_path(t))?;
        let s: Vec<usize> = labels_in.iter().enumerate().filter(|(_, l)| l.verified).map(|(i, _)| i).collect();
        let model = dir.load_checkpoint(t)?;
        let extra = iteration_metrics(&labels_in, &s, &labels_out, &model, &test, &truth, &cfg, &tol)?;
        row.plir = extra.plir;
        row.train_recall = extra.train_recall;
        row.test_recall = extra.test_recall;
    }
    let out = a.out.unwrap_or_else(|| dir.metrics_path());
    write_metrics_csv(&rows, std::io::BufWriter::new(std::fs::File::create(&out)?))?;
    println!("{}", out.display());
    Ok(())
}
