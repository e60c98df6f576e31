//! Pseudo-label verification by overlap ratio, and the loop diagnostics
//! PLSR, PLIR and recall.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Result, SgpError};
use crate::geometry::{rotation_error_deg, translation_error, PointCloud, RigidTransform};
use crate::kdtree::KdTree;
use crate::truth::{EvalScope, GroundTruth};

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabel {
    pub pair_id: String,
    pub transform: RigidTransform,
    /// False when the teacher produced no model; such labels are never verified.
    pub has_model: bool,
    pub inlier_rate: f64,
    pub overlap_ratio: f64,
    pub verified: bool,
    pub stable_count: usize,
    pub skip: bool,
}

impl PseudoLabel {
    pub fn no_model(pair_id: impl Into<String>) -> Self {
        Self {
            pair_id: pair_id.into(),
            transform: RigidTransform::identity(),
            has_model: false,
            inlier_rate: 0.0,
            overlap_ratio: 0.0,
            verified: false,
            stable_count: 0,
            skip: false,
        }
    }
}

/// Fraction of points of `a` whose image under `t` has a neighbor in `b` within `tau`.
pub fn overlap_ratio(t: &RigidTransform, a: &PointCloud, b: &PointCloud, tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(SgpError::invalid("overlap tau must be positive"));
    }
    if a.is_empty() || b.is_empty() {
        return Err(SgpError::invalid("overlap needs nonempty clouds"));
    }
    let tree = KdTree::from_points(&b.points);
    let tau2 = tau * tau;
    let hits = a
        .points
        .par_iter()
        .filter(|p| tree.nearest_point(&t.apply(p)).is_some_and(|(_, d2)| d2 <= tau2))
        .count();
    Ok(hits as f64 / a.len() as f64)
}

/// Marks labels with `overlap_ratio >= eta` as verified and returns their indices.
///
/// With `enabled` false every label is admitted. Labels without a model are
/// never verified.
pub fn verify_labels(labels: &mut [PseudoLabel], eta: f64, enabled: bool) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(SgpError::invalid(format!("eta must lie in [0, 1], got {eta}")));
    }
    let mut s = Vec::new();
    for (i, l) in labels.iter_mut().enumerate() {
        l.verified = if enabled { l.has_model && l.overlap_ratio >= eta } else { true };
        if l.verified {
            s.push(i);
        }
    }
    Ok(s)
}

pub fn plsr(survivors: usize, total: usize) -> Result<f64> {
    if total == 0 {
        return Err(SgpError::invalid("PLSR needs at least one pair"));
    }
    if survivors > total {
        return Err(SgpError::invalid("more survivors than pairs"));
    }
    Ok(100.0 * survivors as f64 / total as f64)
}

/// Success tolerances: strictly below `rot_deg` and `trans` meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rot_deg: f64,
    pub trans: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rot_deg: 15.0,
            trans: 0.30,
        }
    }
}

pub fn label_correct(t_label: &RigidTransform, t_gt: &RigidTransform, tol: &Tolerances) -> bool {
    rotation_error_deg(&t_label.rotation, &t_gt.rotation) < tol.rot_deg
        && translation_error(&t_label.translation, &t_gt.translation) < tol.trans
}

fn truth_for<'a>(gt: &'a GroundTruth, id: &str, scope: &EvalScope) -> Result<&'a RigidTransform> {
    gt.get(id, scope)
        .ok_or_else(|| SgpError::invalid(format!("no ground truth for pair `{id}`")))
}

/// Percentage of labels in `s` within tolerance of ground truth.
pub fn plir(s: &[usize], labels: &[PseudoLabel], gt: &GroundTruth, tol: &Tolerances) -> Result<f64> {
    if s.is_empty() {
        return Err(SgpError::invalid("PLIR of an empty verified set"));
    }
    let scope = EvalScope::new("plir");
    let mut correct = 0;
    for &i in s {
        let l = labels
            .get(i)
            .ok_or_else(|| SgpError::invalid(format!("verified index {i} out of range")))?;
        let t = truth_for(gt, &l.pair_id, &scope)?;
        if l.has_model && label_correct(&l.transform, t, tol) {
            correct += 1;
        }
    }
    Ok(100.0 * correct as f64 / s.len() as f64)
}

/// Percentage of all estimates within tolerance; `None` estimates count as failures.
pub fn recall(estimates: &[(String, Option<RigidTransform>)], gt: &GroundTruth, tol: &Tolerances) -> Result<f64> {
    if estimates.is_empty() {
        return Err(SgpError::invalid("recall of an empty estimate set"));
    }
    let scope = EvalScope::new("recall");
    let mut correct = 0;
    for (id, est) in estimates {
        let t = truth_for(gt, id, &scope)?;
        if est.as_ref().is_some_and(|e| label_correct(e, t, tol)) {
            correct += 1;
        }
    }
    Ok(100.0 * correct as f64 / estimates.len() as f64)
}

/// Recall of a label set.
pub fn label_recall(labels: &[PseudoLabel], gt: &GroundTruth, tol: &Tolerances) -> Result<f64> {
    let est: Vec<(String, Option<RigidTransform>)> = labels
        .iter()
        .map(|l| (l.pair_id.clone(), l.has_model.then_some(l.transform)))
        .collect();
    recall(&est, gt, tol)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopMetrics {
    pub iteration: usize,
    pub plsr: f64,
    pub plir: Option<f64>,
    pub train_recall: Option<f64>,
    pub test_recall: Option<f64>,
}

pub const METRICS_HEADER: &str = "iteration,plsr,plir,train_recall,test_recall";

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_metrics_csv<W: Write>(rows: &[LoopMetrics], mut w: W) -> Result<()> {
    writeln!(w, "{METRICS_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.iteration,
            r.plsr,
            cell(r.plir),
            cell(r.train_recall),
            cell(r.test_recall)
        )?;
    }
    Ok(())
}
