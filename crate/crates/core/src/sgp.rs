//! The teacher-student loop: bootstrap labels from FPFH, then alternate
//! verification, student training and relabeling for a fixed number of rounds.

use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::datagen::RegistrationPair;
use crate::descriptors::DescriptorSet;
use crate::error::{Result, SgpError};
use crate::fpfh::{prepare_cloud, FpfhParams, PreparedCloud};
use crate::geometry::{rotation_error_deg, translation_error, RigidTransform};
use crate::matching::mutual_matches;
use crate::seed::derive;
use crate::student::{
    default_dims, embed, init_weights, student_inputs, train_student, InitMode, LossConfig, MlpDescriptor,
    OptimizerConfig, TrainConfig, TrainingPair,
};
use crate::teacher::{teach, TeacherConfig, TeacherKind};
use crate::truth::GroundTruth;
use crate::verifier::{label_recall, overlap_ratio, plir, plsr, recall, verify_labels, LoopMetrics, PseudoLabel, Tolerances};

const TAG_TEACHER: u64 = 1;
const TAG_INIT: u64 = 2;
const TAG_TRAIN: u64 = 3;
const TAG_EVAL: u64 = 4;

/// A pair after voxelization, normal estimation and FPFH, with student inputs.
#[derive(Debug, Clone)]
pub struct PreparedPair {
    pub id: String,
    pub a: PreparedCloud,
    pub b: PreparedCloud,
    pub inputs_a: Vec<f64>,
    pub valid_a: Vec<bool>,
    pub inputs_b: Vec<f64>,
    pub valid_b: Vec<bool>,
}

pub fn prepare_pair(pair: &RegistrationPair, params: &FpfhParams) -> Result<PreparedPair> {
    let a = prepare_cloud(&pair.a, params)?;
    let b = prepare_cloud(&pair.b, params)?;
    let (inputs_a, valid_a) = student_inputs(&a.fpfh);
    let (inputs_b, valid_b) = student_inputs(&b.fpfh);
    Ok(PreparedPair {
        id: pair.id.clone(),
        a,
        b,
        inputs_a,
        valid_a,
        inputs_b,
        valid_b,
    })
}

pub fn prepare_pairs(pairs: &[RegistrationPair], params: &FpfhParams) -> Result<Vec<PreparedPair>> {
    pairs.par_iter().map(|p| prepare_pair(p, params)).collect()
}

/// Which descriptor drives correspondence search.
#[derive(Debug, Clone, Copy)]
pub enum Descriptor<'a> {
    Fpfh,
    Learned(&'a MlpDescriptor),
}

fn descriptor_sets(pair: &PreparedPair, desc: Descriptor<'_>) -> Result<(DescriptorSet, DescriptorSet)> {
    match desc {
        Descriptor::Fpfh => Ok((pair.a.descriptor_set()?, pair.b.descriptor_set()?)),
        Descriptor::Learned(m) => Ok((
            embed(m, &pair.inputs_a, Some(&pair.valid_a))?.descriptors,
            embed(m, &pair.inputs_b, Some(&pair.valid_b))?.descriptors,
        )),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Registration {
    pub transform: Option<RigidTransform>,
    pub inlier_rate: f64,
    pub correspondences: usize,
}

/// Descriptors, mutual nearest neighbors, then the teacher. Failure to find a
/// model is a result, not an error.
pub fn register_pair(pair: &PreparedPair, desc: Descriptor<'_>, teacher: &TeacherConfig, seed: u64) -> Result<Registration> {
    let (da, db) = descriptor_sets(pair, desc)?;
    if da.valid_count() == 0 || db.valid_count() == 0 {
        return Ok(Registration {
            transform: None,
            inlier_rate: 0.0,
            correspondences: 0,
        });
    }
    let corrs = mutual_matches(&da, &db)?;
    let mut cfg = *teacher;
    cfg.ransac.seed = seed;
    match teach(&corrs, &pair.a.cloud, &pair.b.cloud, &cfg) {
        Ok(r) => Ok(Registration {
            transform: Some(r.transform),
            inlier_rate: r.inlier_rate,
            correspondences: corrs.len(),
        }),
        Err(SgpError::NoModel(_) | SgpError::Degenerate(_)) => Ok(Registration {
            transform: None,
            inlier_rate: 0.0,
            correspondences: corrs.len(),
        }),
        Err(e) => Err(e),
    }
}

fn to_label(pair: &PreparedPair, reg: Registration, tau: f64) -> Result<PseudoLabel> {
    let Some(t) = reg.transform else {
        return Ok(PseudoLabel::no_model(pair.id.clone()));
    };
    Ok(PseudoLabel {
        pair_id: pair.id.clone(),
        transform: t,
        has_model: true,
        inlier_rate: reg.inlier_rate,
        overlap_ratio: overlap_ratio(&t, &pair.a.cloud, &pair.b.cloud, tau)?,
        verified: false,
        stable_count: 0,
        skip: false,
    })
}

/// Iteration ranges mapped to verification thresholds, e.g. `1-2:0.3,3-:0.1`.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaSchedule {
    /// `(first, last inclusive or open-ended, eta)`.
    pub ranges: Vec<(usize, Option<usize>, f64)>,
}

impl EtaSchedule {
    pub fn constant(eta: f64) -> Self {
        Self {
            ranges: vec![(1, None, eta)],
        }
    }

    pub fn eta_at(&self, iteration: usize) -> Option<f64> {
        self.ranges
            .iter()
            .find(|(lo, hi, _)| iteration >= *lo && hi.is_none_or(|h| iteration <= h))
            .map(|r| r.2)
    }

    pub fn validate(&self, iterations: usize) -> Result<()> {
        for (lo, hi, eta) in &self.ranges {
            if *lo == 0 || hi.is_some_and(|h| h < *lo) {
                return Err(SgpError::config("eta_schedule", format!("bad range starting at {lo}")));
            }
            if !(0.0..=1.0).contains(eta) {
                return Err(SgpError::config("eta_schedule", format!("eta {eta} outside [0, 1]")));
            }
        }
        for t in 1..=iterations {
            let hits = self
                .ranges
                .iter()
                .filter(|(lo, hi, _)| t >= *lo && hi.is_none_or(|h| t <= h))
                .count();
            if hits != 1 {
                return Err(SgpError::config("eta_schedule", format!("iteration {t} covered {hits} times")));
            }
        }
        Ok(())
    }
}

impl std::str::FromStr for EtaSchedule {
    type Err = SgpError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |m: String| SgpError::config("eta_schedule", m);
        let mut ranges = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (range, eta) = part.split_once(':').ok_or_else(|| bad(format!("`{part}` lacks `:`")))?;
            let eta: f64 = eta.trim().parse().map_err(|_| bad(format!("bad eta in `{part}`")))?;
            let num = |x: &str| x.trim().parse::<usize>().map_err(|_| bad(format!("bad iteration in `{part}`")));
            let (lo, hi) = match range.split_once('-') {
                Some((lo, "")) => (num(lo)?, None),
                Some((lo, hi)) => (num(lo)?, Some(num(hi)?)),
                None => {
                    let v = num(range)?;
                    (v, Some(v))
                }
            };
            ranges.push((lo, hi, eta));
        }
        if ranges.is_empty() {
            return Err(bad("empty schedule".into()));
        }
        Ok(Self { ranges })
    }
}

impl std::fmt::Display for EtaSchedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self
            .ranges
            .iter()
            .map(|(lo, hi, eta)| match hi {
                Some(h) if h == lo => format!("{lo}:{eta}"),
                Some(h) => format!("{lo}-{h}:{eta}"),
                None => format!("{lo}-:{eta}"),
            })
            .collect();
        f.write_str(&parts.join(","))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgpConfig {
    pub iterations: usize,
    pub retrain: bool,
    pub verify_label: bool,
    pub eta_schedule: EtaSchedule,
    pub teacher: TeacherConfig,
    pub fpfh: FpfhParams,
    pub loss: LossConfig,
    pub optimizer: OptimizerConfig,
    pub epochs_first: usize,
    pub epochs_rest: usize,
    pub hidden: Vec<usize>,
    pub d_f: usize,
    pub normalize_output: bool,
    pub max_anchors_per_pair: Option<usize>,
    pub skip_stable_after: usize,
    pub skip_inlier_rate: f64,
    /// A relabel within these of the previous label counts as unchanged.
    pub stable_rot_deg: f64,
    pub stable_trans: f64,
    pub seed: u64,
}

impl Default for SgpConfig {
    fn default() -> Self {
        Self {
            iterations: 10,
            retrain: false,
            verify_label: true,
            eta_schedule: "1-2:0.3,3-:0.1".parse().expect("valid default"),
            teacher: TeacherConfig::default(),
            fpfh: FpfhParams::default(),
            loss: LossConfig::default(),
            optimizer: OptimizerConfig::default(),
            epochs_first: 100,
            epochs_rest: 50,
            hidden: vec![64, 64],
            d_f: 16,
            normalize_output: true,
            max_anchors_per_pair: None,
            skip_stable_after: 3,
            skip_inlier_rate: 0.8,
            stable_rot_deg: 0.5,
            stable_trans: 0.005,
            seed: 0,
        }
    }
}

impl SgpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(SgpError::config("iterations", "must be at least 1"));
        }
        if self.epochs_first < 1 || self.epochs_rest < 1 {
            let key = if self.epochs_first < 1 { "epochs_first" } else { "epochs_rest" };
            return Err(SgpError::config(key, "must be at least 1"));
        }
        self.eta_schedule.validate(self.iterations)?;
        let r = &self.teacher.ransac;
        if !(r.confidence > 0.0 && r.confidence < 1.0) {
            return Err(SgpError::config("confidence", format!("must lie in (0, 1), got {}", r.confidence)));
        }
        if !(r.inlier_threshold > 0.0) {
            return Err(SgpError::config("inlier_threshold", "must be positive"));
        }
        if r.max_iterations < 1 {
            return Err(SgpError::config("max_iterations", "must be at least 1"));
        }
        if !(self.teacher.icp_distance > 0.0) {
            return Err(SgpError::config("icp_distance", "must be positive"));
        }
        self.loss.validate(self.normalize_output)?;
        if self.d_f == 0 {
            return Err(SgpError::config("d_f", "must be positive"));
        }
        if self.hidden.contains(&0) {
            return Err(SgpError::config("hidden", "layer widths must be positive"));
        }
        if !(0.0..=1.0).contains(&self.skip_inlier_rate) {
            return Err(SgpError::config("skip_inlier_rate", "must lie in [0, 1]"));
        }
        if !(self.optimizer.learning_rate > 0.0) {
            return Err(SgpError::config("learning_rate", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.optimizer.momentum) {
            return Err(SgpError::config("momentum", "must lie in [0, 1)"));
        }
        if !(self.fpfh.voxel_size > 0.0) {
            return Err(SgpError::config("voxel_size", "must be positive"));
        }
        if !(self.fpfh.radius > 0.0) {
            return Err(SgpError::config("fpfh_radius", "must be positive"));
        }
        if self.fpfh.normal_k < 3 {
            return Err(SgpError::config("normal_k", "normals need at least 3 neighbors"));
        }
        if !(self.stable_rot_deg >= 0.0 && self.stable_trans >= 0.0) {
            return Err(SgpError::config("stable_rot_deg", "stability thresholds must be nonnegative"));
        }
        if self.max_anchors_per_pair == Some(0) {
            return Err(SgpError::config("max_anchors_per_pair", "must be positive when set"));
        }
        Ok(())
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = default_dims(self.d_f);
        d.splice(1..d.len() - 1, self.hidden.iter().copied());
        d
    }

    /// TLS truncation and verification distance.
    pub fn c_bar(&self) -> f64 {
        self.teacher.ransac.inlier_threshold
    }

    fn teacher_seed(&self, pair: usize, iteration: usize) -> u64 {
        derive(self.seed, &[TAG_TEACHER, pair as u64, iteration as u64])
    }
}

/// Bootstrap labels from FPFH with cross check and the configured teacher.
pub fn bootstrap(pairs: &[PreparedPair], cfg: &SgpConfig) -> Result<Vec<PseudoLabel>> {
    pairs
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let reg = register_pair(p, Descriptor::Fpfh, &cfg.teacher, cfg.teacher_seed(i, 0))?;
            to_label(p, reg, cfg.c_bar())
        })
        .collect()
}

/// Loop state handed to observers after each iteration.
#[derive(Debug)]
pub struct IterationSnapshot<'a> {
    pub iteration: usize,
    pub eta: f64,
    pub model: &'a MlpDescriptor,
    /// Labels entering this iteration, with this iteration's verification flags.
    pub labels_in: &'a [PseudoLabel],
    pub verified: &'a [usize],
    /// Labels after relabeling.
    pub labels_out: &'a [PseudoLabel],
    pub trained: bool,
}

/// Evaluation-side quantities an observer may contribute to a metrics row.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MetricsExtra {
    pub plir: Option<f64>,
    pub train_recall: Option<f64>,
    pub test_recall: Option<f64>,
}

pub trait LoopObserver {
    fn bootstrap(&mut self, _labels: &[PseudoLabel]) -> Result<()> {
        Ok(())
    }

    fn iteration(&mut self, _snapshot: &IterationSnapshot<'_>) -> Result<MetricsExtra> {
        Ok(MetricsExtra::default())
    }
}

/// Observer that records nothing.
pub struct NoObserver;

impl LoopObserver for NoObserver {}

#[derive(Debug, Clone, PartialEq)]
pub struct SgpState {
    pub iteration: usize,
    pub model: MlpDescriptor,
    pub labels: Vec<PseudoLabel>,
    pub metrics: Vec<LoopMetrics>,
    /// Model after each iteration, index 0 = iteration 1.
    pub models: Vec<MlpDescriptor>,
    /// Pair ids handed to the student at each iteration.
    pub consumed: Vec<Vec<String>>,
    /// Verified pair ids at each iteration.
    pub verified: Vec<Vec<String>>,
    pub last_epoch_loss: Vec<Option<f64>>,
    pub diagnostics: Vec<String>,
}

fn unchanged(prev: &PseudoLabel, next: &PseudoLabel, cfg: &SgpConfig) -> bool {
    prev.has_model
        && next.has_model
        && rotation_error_deg(&prev.transform.rotation, &next.transform.rotation) < cfg.stable_rot_deg
        && translation_error(&prev.transform.translation, &next.transform.translation) < cfg.stable_trans
}

/// The full loop over prepared training pairs. Ground truth is never an input.
pub fn run_sgp(pairs: &[PreparedPair], cfg: &SgpConfig, observer: &mut dyn LoopObserver) -> Result<SgpState> {
    if pairs.is_empty() {
        return Err(SgpError::invalid("SGP needs at least one training pair"));
    }
    cfg.validate()?;
    let mut labels = bootstrap(pairs, cfg)?;
    observer.bootstrap(&labels)?;
    let dims = cfg.dims();
    let mut model = init_weights(&dims, derive(cfg.seed, &[TAG_INIT, 0]), InitMode::Fresh, cfg.normalize_output)?;
    let mut state = SgpState {
        iteration: 0,
        model: model.clone(),
        labels: Vec::new(),
        metrics: Vec::new(),
        models: Vec::new(),
        consumed: Vec::new(),
        verified: Vec::new(),
        last_epoch_loss: Vec::new(),
        diagnostics: Vec::new(),
    };

    for tau in 1..=cfg.iterations {
        let eta = cfg.eta_schedule.eta_at(tau).expect("validated schedule");
        let s = verify_labels(&mut labels, eta, cfg.verify_label)?;
        let survival = plsr(s.len(), labels.len())?;

        let training: Vec<(usize, TrainingPair)> = s
            .iter()
            .filter(|&&i| labels[i].has_model)
            .map(|&i| {
                let p = &pairs[i];
                (
                    i,
                    TrainingPair {
                        points_a: &p.a.cloud.points,
                        inputs_a: &p.inputs_a,
                        points_b: &p.b.cloud.points,
                        inputs_b: &p.inputs_b,
                        label: labels[i].transform,
                    },
                )
            })
            .collect();
        let consumed: Vec<String> = training.iter().map(|(i, _)| pairs[*i].id.clone()).collect();
        let verified_ids: BTreeSet<String> = s.iter().map(|&i| labels[i].pair_id.clone()).collect();
        if consumed.iter().any(|id| !verified_ids.contains(id)) {
            return Err(SgpError::Audit(format!("iteration {tau}: student consumed an unverified label")));
        }

        let mut trained = false;
        let mut last_loss = None;
        if training.is_empty() {
            state
                .diagnostics
                .push(format!("iteration {tau}: empty verified set, student step skipped"));
        } else {
            let init = if cfg.retrain {
                init_weights(&dims, derive(cfg.seed, &[TAG_INIT, tau as u64]), InitMode::Fresh, cfg.normalize_output)?
            } else {
                model.clone()
            };
            let train_cfg = TrainConfig {
                epochs: if tau == 1 { cfg.epochs_first } else { cfg.epochs_rest },
                optimizer: cfg.optimizer,
                loss: cfg.loss,
                max_anchors_per_pair: cfg.max_anchors_per_pair,
                c_bar: cfg.c_bar(),
            };
            let tp: Vec<TrainingPair> = training.iter().map(|(_, p)| *p).collect();
            let report = train_student(&init, &tp, &train_cfg, derive(cfg.seed, &[TAG_TRAIN, tau as u64]))?;
            last_loss = report.last_epoch_loss();
            model = report.model;
            trained = true;
        }

        let relabeled: Vec<Option<PseudoLabel>> = pairs
            .par_iter()
            .enumerate()
            .map(|(i, p)| {
                if labels[i].skip {
                    return Ok(None);
                }
                let reg = register_pair(p, Descriptor::Learned(&model), &cfg.teacher, cfg.teacher_seed(i, tau))?;
                to_label(p, reg, cfg.c_bar()).map(Some)
            })
            .collect::<Result<_>>()?;
        let labels_in = labels.clone();
        for (i, next) in relabeled.into_iter().enumerate() {
            let Some(mut next) = next else { continue };
            let prev = &labels[i];
            next.stable_count = if unchanged(prev, &next, cfg) { prev.stable_count + 1 } else { 0 };
            next.verified = prev.verified;
            next.skip = next.has_model
                && (next.stable_count >= cfg.skip_stable_after || next.inlier_rate > cfg.skip_inlier_rate);
            labels[i] = next;
        }

        let extra = observer.iteration(&IterationSnapshot {
            iteration: tau,
            eta,
            model: &model,
            labels_in: &labels_in,
            verified: &s,
            labels_out: &labels,
            trained,
        })?;
        state.metrics.push(LoopMetrics {
            iteration: tau,
            plsr: survival,
            plir: extra.plir,
            train_recall: extra.train_recall,
            test_recall: extra.test_recall,
        });
        state.models.push(model.clone());
        state.consumed.push(consumed);
        state.verified.push(verified_ids.into_iter().collect());
        state.last_epoch_loss.push(last_loss);
    }
    state.iteration = cfg.iterations;
    state.model = model;
    state.labels = labels;
    Ok(state)
}

/// Registers every pair with RANSAC and returns the estimates in pair order.
pub fn register_all(pairs: &[PreparedPair], desc: Descriptor<'_>, cfg: &SgpConfig) -> Result<Vec<(String, Option<RigidTransform>)>> {
    let mut teacher = cfg.teacher;
    teacher.kind = TeacherKind::Ransac;
    pairs
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let seed = derive(cfg.seed, &[TAG_EVAL, i as u64]);
            Ok((p.id.clone(), register_pair(p, desc, &teacher, seed)?.transform))
        })
        .collect()
}

/// Recall of the RANSAC pipeline driven by `desc` on held-out pairs.
pub fn evaluate(desc: Descriptor<'_>, pairs: &[PreparedPair], truth: &GroundTruth, cfg: &SgpConfig, tol: &Tolerances) -> Result<f64> {
    if pairs.is_empty() {
        return Err(SgpError::invalid("evaluation set is empty"));
    }
    let estimates = register_all(pairs, desc, cfg)?;
    recall(&estimates, truth, tol)
}

/// Index of the per-iteration model with the highest validation recall (earliest on ties).
pub fn select_best_model(models: &[MlpDescriptor], validation: &[PreparedPair], truth: &GroundTruth, cfg: &SgpConfig, tol: &Tolerances) -> Result<usize> {
    let mut best = (f64::NEG_INFINITY, 0);
    for (k, m) in models.iter().enumerate() {
        let r = evaluate(Descriptor::Learned(m), validation, truth, cfg, tol)?;
        if r > best.0 {
            best = (r, k);
        }
    }
    if models.is_empty() {
        return Err(SgpError::invalid("no models to select from"));
    }
    Ok(best.1)
}

/// PLIR over the verified labels entering an iteration, recall of the labels
/// it produced, and RANSAC test recall of its model.
pub fn iteration_metrics(
    labels_in: &[PseudoLabel],
    verified: &[usize],
    labels_out: &[PseudoLabel],
    model: &MlpDescriptor,
    test: &[PreparedPair],
    truth: &GroundTruth,
    cfg: &SgpConfig,
    tol: &Tolerances,
) -> Result<MetricsExtra> {
    Ok(MetricsExtra {
        plir: if verified.is_empty() { None } else { Some(plir(verified, labels_in, truth, tol)?) },
        train_recall: Some(label_recall(labels_out, truth, tol)?),
        test_recall: if test.is_empty() {
            None
        } else {
            Some(evaluate(Descriptor::Learned(model), test, truth, cfg, tol)?)
        },
    })
}

/// Observer that fills every metrics column from held-out ground truth.
pub struct EvalObserver<'a> {
    pub test: &'a [PreparedPair],
    pub truth: &'a GroundTruth,
    pub cfg: &'a SgpConfig,
    pub tol: Tolerances,
}

impl LoopObserver for EvalObserver<'_> {
    fn iteration(&mut self, s: &IterationSnapshot<'_>) -> Result<MetricsExtra> {
        iteration_metrics(s.labels_in, s.verified, s.labels_out, s.model, self.test, self.truth, self.cfg, &self.tol)
    }
}
