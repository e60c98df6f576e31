//! Plain-text `key = value` loop configuration.
//!
//! Missing keys keep their defaults, unknown keys are rejected, and `#`
//! starts a comment. [`config_to_string`] writes every key, so a snapshot
//! reloads to an identical config.

use std::collections::BTreeSet;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Result, SgpError};
use crate::sgp::{EtaSchedule, SgpConfig};
use crate::teacher::TeacherKind;

pub const CONFIG_KEYS: [&str; 33] = [
    "iterations",
    "retrain",
    "verify_label",
    "eta_schedule",
    "teacher",
    "max_iterations",
    "confidence",
    "inlier_threshold",
    "icp_max_iterations",
    "icp_distance",
    "voxel_size",
    "normal_k",
    "fpfh_radius",
    "m_p",
    "m_n",
    "m",
    "lambda_p",
    "lambda_n",
    "lambda",
    "negatives_per_anchor",
    "learning_rate",
    "momentum",
    "epochs_first",
    "epochs_rest",
    "hidden",
    "d_f",
    "normalize_output",
    "max_anchors_per_pair",
    "skip_stable_after",
    "skip_inlier_rate",
    "stable_rot_deg",
    "stable_trans",
    "seed",
];

fn value<T: FromStr>(key: &str, raw: &str, what: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| SgpError::config(key, format!("expected {what}, got `{raw}`")))
}

fn real(key: &str, raw: &str) -> Result<f64> {
    let v: f64 = value(key, raw, "a number")?;
    if !v.is_finite() {
        return Err(SgpError::config(key, format!("expected a finite number, got `{raw}`")));
    }
    Ok(v)
}

fn count(key: &str, raw: &str) -> Result<usize> {
    value(key, raw, "a nonnegative integer")
}

fn flag(key: &str, raw: &str) -> Result<bool> {
    value(key, raw, "`true` or `false`")
}

/// Applies one `key = value` assignment.
pub fn set_key(cfg: &mut SgpConfig, key: &str, raw: &str) -> Result<()> {
    match key {
        "iterations" => cfg.iterations = count(key, raw)?,
        "retrain" => cfg.retrain = flag(key, raw)?,
        "verify_label" => cfg.verify_label = flag(key, raw)?,
        "eta_schedule" => cfg.eta_schedule = raw.parse::<EtaSchedule>()?,
        "teacher" => cfg.teacher.kind = raw.parse::<TeacherKind>().map_err(|e| SgpError::config(key, e.to_string()))?,
        "max_iterations" => cfg.teacher.ransac.max_iterations = count(key, raw)?,
        "confidence" => cfg.teacher.ransac.confidence = real(key, raw)?,
        "inlier_threshold" => cfg.teacher.ransac.inlier_threshold = real(key, raw)?,
        "icp_max_iterations" => cfg.teacher.icp_max_iterations = count(key, raw)?,
        "icp_distance" => cfg.teacher.icp_distance = real(key, raw)?,
        "voxel_size" => cfg.fpfh.voxel_size = real(key, raw)?,
        "normal_k" => cfg.fpfh.normal_k = count(key, raw)?,
        "fpfh_radius" => cfg.fpfh.radius = real(key, raw)?,
        "m_p" => cfg.loss.m_p = real(key, raw)?,
        "m_n" => cfg.loss.m_n = real(key, raw)?,
        "m" => cfg.loss.m = real(key, raw)?,
        "lambda_p" => cfg.loss.lambda_p = real(key, raw)?,
        "lambda_n" => cfg.loss.lambda_n = real(key, raw)?,
        "lambda" => cfg.loss.lambda = real(key, raw)?,
        "negatives_per_anchor" => cfg.loss.negatives_per_anchor = count(key, raw)?,
        "learning_rate" => cfg.optimizer.learning_rate = real(key, raw)?,
        "momentum" => cfg.optimizer.momentum = real(key, raw)?,
        "epochs_first" => cfg.epochs_first = count(key, raw)?,
        "epochs_rest" => cfg.epochs_rest = count(key, raw)?,
        "hidden" => {
            cfg.hidden = raw
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| count(key, s))
                .collect::<Result<_>>()?
        }
        "d_f" => cfg.d_f = count(key, raw)?,
        "normalize_output" => cfg.normalize_output = flag(key, raw)?,
        "max_anchors_per_pair" => {
            cfg.max_anchors_per_pair = match raw {
                "none" => None,
                _ => Some(count(key, raw)?),
            }
        }
        "skip_stable_after" => cfg.skip_stable_after = count(key, raw)?,
        "skip_inlier_rate" => cfg.skip_inlier_rate = real(key, raw)?,
        "stable_rot_deg" => cfg.stable_rot_deg = real(key, raw)?,
        "stable_trans" => cfg.stable_trans = real(key, raw)?,
        "seed" => cfg.seed = value(key, raw, "an unsigned 64-bit integer")?,
        _ => return Err(SgpError::config(key, "unknown key")),
    }
    Ok(())
}

/// Parses config text on top of the defaults, then validates the result.
pub fn parse_config(text: &str, path: &Path) -> Result<SgpConfig> {
    let mut cfg = SgpConfig::default();
    let mut seen = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let Some((key, raw)) = body.split_once('=') else {
            return Err(SgpError::parse(path, i + 1, format!("expected `key = value`, got `{body}`")));
        };
        let (key, raw) = (key.trim(), raw.trim());
        if !seen.insert(key.to_string()) {
            return Err(SgpError::config(key, format!("set twice (line {})", i + 1)));
        }
        set_key(&mut cfg, key, raw)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<SgpConfig> {
    let path = path.as_ref();
    parse_config(&std::fs::read_to_string(path)?, path)
}

/// Every key, one per line, in [`CONFIG_KEYS`] order.
pub fn config_to_string(cfg: &SgpConfig) -> String {
    let hidden: Vec<String> = cfg.hidden.iter().map(usize::to_string).collect();
    let values: [String; 33] = [
        cfg.iterations.to_string(),
        cfg.retrain.to_string(),
        cfg.verify_label.to_string(),
        cfg.eta_schedule.to_string(),
        cfg.teacher.kind.as_str().to_string(),
        cfg.teacher.ransac.max_iterations.to_string(),
        cfg.teacher.ransac.confidence.to_string(),
        cfg.teacher.ransac.inlier_threshold.to_string(),
        cfg.teacher.icp_max_iterations.to_string(),
        cfg.teacher.icp_distance.to_string(),
        cfg.fpfh.voxel_size.to_string(),
        cfg.fpfh.normal_k.to_string(),
        cfg.fpfh.radius.to_string(),
        cfg.loss.m_p.to_string(),
        cfg.loss.m_n.to_string(),
        cfg.loss.m.to_string(),
        cfg.loss.lambda_p.to_string(),
        cfg.loss.lambda_n.to_string(),
        cfg.loss.lambda.to_string(),
        cfg.loss.negatives_per_anchor.to_string(),
        cfg.optimizer.learning_rate.to_string(),
        cfg.optimizer.momentum.to_string(),
        cfg.epochs_first.to_string(),
        cfg.epochs_rest.to_string(),
        hidden.join(","),
        cfg.d_f.to_string(),
        cfg.normalize_output.to_string(),
        cfg.max_anchors_per_pair.map_or("none".to_string(), |v| v.to_string()),
        cfg.skip_stable_after.to_string(),
        cfg.skip_inlier_rate.to_string(),
        cfg.stable_rot_deg.to_string(),
        cfg.stable_trans.to_string(),
        cfg.seed.to_string(),
    ];
    CONFIG_KEYS
        .iter()
        .zip(values)
        .map(|(k, v)| format!("{k} = {v}\n"))
        .collect()
}

pub fn save_config(cfg: &SgpConfig, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, config_to_string(cfg))?;
    Ok(())
}
