//! Dataset directories: PLY fragments plus a manifest CSV.
//!
//! Ground-truth columns are kept as raw text and parsed only by
//! [`Manifest::ground_truth`], which counts its calls.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;

use crate::datagen::{PairDataset, RegistrationPair};
use crate::error::{Result, SgpError};
use crate::geometry::RigidTransform;
use crate::io::ply::{load_ply, save_ply};
use crate::truth::GroundTruth;

pub const TRANSFORM_COLUMNS: [&str; 12] = ["r00", "r01", "r02", "r10", "r11", "r12", "r20", "r21", "r22", "tx", "ty", "tz"];

pub const MANIFEST_FILE: &str = "manifest.csv";

fn manifest_header() -> Vec<&'static str> {
    let mut h = vec!["pair_id", "file_a", "file_b"];
    h.extend(TRANSFORM_COLUMNS);
    h.push("achieved_overlap");
    h
}

/// Pairs whose id starts with `test_` form the held-out split.
pub fn is_test_id(pair_id: &str) -> bool {
    pair_id.starts_with("test_")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub pair_id: String,
    pub file_a: PathBuf,
    pub file_b: PathBuf,
    pub truth: Option<RigidTransform>,
    pub achieved_overlap: Option<f64>,
}

pub fn write_manifest(entries: &[ManifestEntry], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(manifest_header()).map_err(csv_error)?;
    for e in entries {
        let mut row = vec![e.pair_id.clone(), path_text(&e.file_a)?, path_text(&e.file_b)?];
        match e.truth {
            Some(t) => row.extend(t.to_row_major_12().iter().map(f64::to_string)),
            None => row.extend(std::iter::repeat_n(String::new(), 12)),
        }
        row.push(e.achieved_overlap.map(|v| v.to_string()).unwrap_or_default());
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn path_text(p: &Path) -> Result<String> {
    p.to_str()
        .map(str::to_owned)
        .ok_or_else(|| SgpError::invalid(format!("path {} is not valid UTF-8", p.display())))
}

pub(crate) fn csv_error(e: csv::Error) -> SgpError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => SgpError::Io(io),
        other => SgpError::invalid(format!("csv: {other:?}")),
    }
}

/// Writes every pair as `clouds/<id>_a.ply`, `clouds/<id>_b.ply` plus the
/// manifest, and returns the manifest path.
pub fn write_dataset(data: &PairDataset, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir.join("clouds"))?;
    let pairs: Vec<&RegistrationPair> = data.all_pairs().collect();
    let files: Vec<(PathBuf, PathBuf)> = pairs
        .par_iter()
        .map(|p| {
            let a = PathBuf::from("clouds").join(format!("{}_a.ply", p.id));
            let b = PathBuf::from("clouds").join(format!("{}_b.ply", p.id));
            save_ply(&p.a, dir.join(&a))?;
            save_ply(&p.b, dir.join(&b))?;
            Ok((a, b))
        })
        .collect::<Result<_>>()?;
    let truth: std::collections::BTreeMap<&str, RigidTransform> = data.truth.export().map(|(k, v)| (k, *v)).collect();
    let overlaps: std::collections::BTreeMap<&str, f64> = data.overlaps.iter().map(|(k, v, _)| (k.as_str(), *v)).collect();
    let entries: Vec<ManifestEntry> = pairs
        .iter()
        .zip(files)
        .map(|(p, (a, b))| ManifestEntry {
            pair_id: p.id.clone(),
            file_a: a,
            file_b: b,
            truth: truth.get(p.id.as_str()).copied(),
            achieved_overlap: overlaps.get(p.id.as_str()).copied(),
        })
        .collect();
    let path = dir.join(MANIFEST_FILE);
    write_manifest(&entries, &path)?;
    Ok(path)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub pair_id: String,
    /// As written in the manifest; see [`Manifest::resolve`].
    pub file_a: PathBuf,
    pub file_b: PathBuf,
    pub achieved_overlap: Option<f64>,
    truth_cells: Vec<String>,
    line: usize,
}

#[derive(Debug)]
pub struct Manifest {
    path: PathBuf,
    base: PathBuf,
    pub rows: Vec<ManifestRow>,
    truth_reads: AtomicUsize,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_reader(BufReader::new(File::open(path)?), path)
    }

    /// Relative file paths resolve against the manifest's directory.
    pub fn from_reader<R: Read>(reader: R, path: &Path) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header = r.headers().map_err(csv_error)?.clone();
        if header.iter().collect::<Vec<_>>() != manifest_header() {
            return Err(SgpError::parse(path, 1, format!("manifest header must be `{}`", manifest_header().join(","))));
        }
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut rows = Vec::new();
        let mut ids = BTreeSet::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line() as usize);
                SgpError::parse(path, line, e.to_string())
            })?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            let pair_id = rec[0].to_string();
            if pair_id.is_empty() {
                return Err(SgpError::parse(path, line, "empty pair_id"));
            }
            if !ids.insert(pair_id.clone()) {
                return Err(SgpError::parse(path, line, format!("duplicate pair_id `{pair_id}`")));
            }
            let achieved_overlap = match &rec[15] {
                "" => None,
                s => Some(
                    s.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| SgpError::parse(path, line, format!("bad achieved_overlap `{s}`")))?,
                ),
            };
            let row = ManifestRow {
                pair_id,
                file_a: PathBuf::from(&rec[1]),
                file_b: PathBuf::from(&rec[2]),
                achieved_overlap,
                truth_cells: (3..15).map(|i| rec[i].to_string()).collect(),
                line,
            };
            for f in [&row.file_a, &row.file_b] {
                if !base.join(f).is_file() {
                    return Err(SgpError::parse(path, line, format!("file {} does not exist", base.join(f).display())));
                }
            }
            rows.push(row);
        }
        Ok(Self {
            path: path.to_path_buf(),
            base,
            rows,
            truth_reads: AtomicUsize::new(0),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn resolve(&self, file: &Path) -> PathBuf {
        self.base.join(file)
    }

    pub fn load_pair(&self, row: &ManifestRow) -> Result<RegistrationPair> {
        Ok(RegistrationPair {
            id: row.pair_id.clone(),
            a: load_ply(self.resolve(&row.file_a))?,
            b: load_ply(self.resolve(&row.file_b))?,
        })
    }

    /// Loads the clouds of the rows accepted by `keep`, in manifest order.
    pub fn load_pairs(&self, keep: impl Fn(&ManifestRow) -> bool + Sync) -> Result<Vec<RegistrationPair>> {
        self.rows.par_iter().filter(|r| keep(r)).map(|r| self.load_pair(r)).collect()
    }

    /// Parses the ground-truth columns. Rows with empty cells carry no truth.
    pub fn ground_truth(&self) -> Result<GroundTruth> {
        self.truth_reads.fetch_add(1, Ordering::SeqCst);
        let mut gt = GroundTruth::new();
        for row in &self.rows {
            if row.truth_cells.iter().all(String::is_empty) {
                continue;
            }
            let mut v = [0.0; 12];
            for (k, cell) in row.truth_cells.iter().enumerate() {
                v[k] = cell.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| {
                    SgpError::parse(&self.path, row.line, format!("bad ground-truth value `{cell}` in {}", TRANSFORM_COLUMNS[k]))
                })?;
            }
            let t = RigidTransform::from_row_major_12(&v);
            t.validate()
                .map_err(|e| SgpError::parse(&self.path, row.line, format!("ground truth is not a rigid transform: {e}")))?;
            gt.insert(row.pair_id.clone(), t);
        }
        Ok(gt)
    }

    /// Calls to [`Manifest::ground_truth`] on this manifest.
    pub fn truth_reads(&self) -> usize {
        self.truth_reads.load(Ordering::SeqCst)
    }
}
