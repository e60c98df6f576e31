//! Pseudo-label and metrics CSV files.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Result, SgpError};
use crate::geometry::RigidTransform;
use crate::io::manifest::{csv_error, TRANSFORM_COLUMNS};
use crate::verifier::{LoopMetrics, PseudoLabel, METRICS_HEADER};

fn labels_header() -> Vec<&'static str> {
    let mut h = vec!["pair_id"];
    h.extend(TRANSFORM_COLUMNS);
    h.extend(["inlier_rate", "overlap_ratio", "verified", "skip"]);
    h
}

/// Labels without a model leave the transform cells empty. The stability
/// counter is not stored.
pub fn write_labels<W: Write>(labels: &[PseudoLabel], w: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(labels_header()).map_err(csv_error)?;
    for l in labels {
        let mut row = vec![l.pair_id.clone()];
        if l.has_model {
            row.extend(l.transform.to_row_major_12().iter().map(f64::to_string));
        } else {
            row.extend(std::iter::repeat_n(String::new(), 12));
        }
        row.extend([
            l.inlier_rate.to_string(),
            l.overlap_ratio.to_string(),
            l.verified.to_string(),
            l.skip.to_string(),
        ]);
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_labels(labels: &[PseudoLabel], path: impl AsRef<Path>) -> Result<()> {
    write_labels(labels, BufWriter::new(File::create(path)?))
}

pub fn read_labels<R: Read>(reader: R, path: &Path) -> Result<Vec<PseudoLabel>> {
    let mut r = csv::Reader::from_reader(reader);
    if r.headers().map_err(csv_error)?.iter().collect::<Vec<_>>() != labels_header() {
        return Err(SgpError::parse(path, 1, format!("labels header must be `{}`", labels_header().join(","))));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| SgpError::parse(path, e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| SgpError::parse(path, line, format!("bad number `{}`", &rec[i])))
        };
        let flag = |i: usize| -> Result<bool> {
            rec[i]
                .parse::<bool>()
                .map_err(|_| SgpError::parse(path, line, format!("expected true or false, got `{}`", &rec[i])))
        };
        let has_model = !(1..13).all(|i| rec[i].is_empty());
        let transform = if has_model {
            let mut v = [0.0; 12];
            for (k, x) in v.iter_mut().enumerate() {
                *x = num(k + 1)?;
            }
            let t = RigidTransform::from_row_major_12(&v);
            t.validate().map_err(|e| SgpError::parse(path, line, e.to_string()))?;
            t
        } else {
            RigidTransform::identity()
        };
        out.push(PseudoLabel {
            pair_id: rec[0].to_string(),
            transform,
            has_model,
            inlier_rate: num(13)?,
            overlap_ratio: num(14)?,
            verified: flag(15)?,
            stable_count: 0,
            skip: flag(16)?,
        });
    }
    Ok(out)
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<PseudoLabel>> {
    let path = path.as_ref();
    read_labels(BufReader::new(File::open(path)?), path)
}

pub fn read_metrics<R: Read>(reader: R, path: &Path) -> Result<Vec<LoopMetrics>> {
    let mut r = csv::Reader::from_reader(reader);
    if r.headers().map_err(csv_error)?.iter().collect::<Vec<_>>().join(",") != METRICS_HEADER {
        return Err(SgpError::parse(path, 1, format!("metrics header must be `{METRICS_HEADER}`")));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| SgpError::parse(path, e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let bad = |i: usize| SgpError::parse(path, line, format!("bad value `{}`", &rec[i]));
        let opt = |i: usize| -> Result<Option<f64>> {
            match &rec[i] {
                "" => Ok(None),
                s => s.parse().map(Some).map_err(|_| bad(i)),
            }
        };
        out.push(LoopMetrics {
            iteration: rec[0].parse().map_err(|_| bad(0))?,
            plsr: rec[1].parse().map_err(|_| bad(1))?,
            plir: opt(2)?,
            train_recall: opt(3)?,
            test_recall: opt(4)?,
        });
    }
    Ok(out)
}

pub fn load_metrics(path: impl AsRef<Path>) -> Result<Vec<LoopMetrics>> {
    let path = path.as_ref();
    read_metrics(BufReader::new(File::open(path)?), path)
}
