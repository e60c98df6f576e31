//! ASCII PLY point clouds with optional normals.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Result, SgpError};
use crate::geometry::{PointCloud, Vec3};

/// Writes coordinates with 17 significant digits so they read back exactly.
pub fn write_ply<W: Write>(cloud: &PointCloud, mut w: W) -> Result<()> {
    cloud.validate()?;
    let normals = cloud.normals.as_ref();
    writeln!(w, "ply")?;
    writeln!(w, "format ascii 1.0")?;
    writeln!(w, "element vertex {}", cloud.len())?;
    for p in ["x", "y", "z"] {
        writeln!(w, "property double {p}")?;
    }
    if normals.is_some() {
        for p in ["nx", "ny", "nz"] {
            writeln!(w, "property double {p}")?;
        }
    }
    writeln!(w, "end_header")?;
    for (i, p) in cloud.points.iter().enumerate() {
        write!(w, "{:.16e} {:.16e} {:.16e}", p.x, p.y, p.z)?;
        if let Some(n) = normals {
            let n = n[i];
            write!(w, " {:.16e} {:.16e} {:.16e}", n.x, n.y, n.z)?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_ply(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    write_ply(cloud, BufWriter::new(File::create(path)?))
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<String>,
    has_list: bool,
}

const SCALAR_TYPES: [&str; 16] = [
    "char", "uchar", "short", "ushort", "int", "uint", "float", "double", "int8", "uint8", "int16", "uint16", "int32",
    "uint32", "float32", "float64",
];

pub fn read_ply<R: BufRead>(reader: R, path: &Path) -> Result<PointCloud> {
    let err = |line: usize, msg: String| SgpError::parse(path, line, msg);
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut last = 0;
    let mut next = |expect: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((n, l)) => {
                last = n;
                Ok((n, l?))
            }
            None => Err(SgpError::parse(path, last + 1, format!("unexpected end of file, expected {expect}"))),
        }
    };

    let (n, magic) = next("`ply`")?;
    if magic.trim() != "ply" {
        return Err(err(n, "missing `ply` magic line".into()));
    }
    let mut elements: Vec<Element> = Vec::new();
    let mut format_seen = false;
    let mut line_no;
    loop {
        let (n, line) = next("`end_header`")?;
        line_no = n;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            [] => {}
            ["comment", ..] | ["obj_info", ..] => {}
            ["format", "ascii", "1.0"] => format_seen = true,
            ["format", other, ..] => return Err(err(n, format!("unsupported format `{other}`, only ascii 1.0 is read"))),
            ["element", name, count] => {
                let count = count.parse().map_err(|_| err(n, format!("bad element count `{count}`")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                    has_list: false,
                });
            }
            ["property", "list", _, _, name] => {
                let e = elements.last_mut().ok_or_else(|| err(n, "property before any element".into()))?;
                e.properties.push(name.to_string());
                e.has_list = true;
            }
            ["property", ty, name] => {
                if !SCALAR_TYPES.contains(ty) {
                    return Err(err(n, format!("unknown property type `{ty}`")));
                }
                let e = elements.last_mut().ok_or_else(|| err(n, "property before any element".into()))?;
                e.properties.push(name.to_string());
            }
            ["end_header"] => break,
            _ => return Err(err(n, format!("malformed header line `{}`", line.trim()))),
        }
    }
    if !format_seen {
        return Err(err(line_no, "header lacks a `format ascii 1.0` line".into()));
    }
    let vertex = elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| err(line_no, "header declares no vertex element".into()))?;
    let props = &elements[vertex].properties;
    if elements[vertex].has_list {
        return Err(err(line_no, "list properties on vertices are not supported".into()));
    }
    let col = |name: &str| props.iter().position(|p| p == name);
    let (Some(cx), Some(cy), Some(cz)) = (col("x"), col("y"), col("z")) else {
        return Err(err(line_no, "vertex element needs x, y and z properties".into()));
    };
    let normal_cols = match (col("nx"), col("ny"), col("nz")) {
        (Some(a), Some(b), Some(c)) => Some([a, b, c]),
        _ => None,
    };

    let mut points = Vec::with_capacity(elements[vertex].count);
    let mut normals = normal_cols.map(|_| Vec::with_capacity(elements[vertex].count));
    for (k, e) in elements.iter().enumerate() {
        let mut seen = 0;
        while seen < e.count {
            let Some((n, line)) = lines.next() else {
                return Err(err(
                    line_no + 1,
                    format!("truncated: element {} declares {} entries, found {seen}", e.name, e.count),
                ));
            };
            let line = line?;
            line_no = n;
            if line.trim().is_empty() {
                continue;
            }
            seen += 1;
            if k != vertex {
                continue;
            }
            let tokens: Vec<&str> = line.split_whitespace().collect();
            if tokens.len() != props.len() {
                return Err(err(n, format!("expected {} values, found {}", props.len(), tokens.len())));
            }
            let value = |c: usize| -> Result<f64> {
                let v: f64 = tokens[c].parse().map_err(|_| err(n, format!("bad number `{}`", tokens[c])))?;
                if !v.is_finite() {
                    return Err(err(n, format!("non-finite value `{}`", tokens[c])));
                }
                Ok(v)
            };
            points.push(Vec3::new(value(cx)?, value(cy)?, value(cz)?));
            if let (Some(cols), Some(ns)) = (normal_cols, normals.as_mut()) {
                ns.push(Vec3::new(value(cols[0])?, value(cols[1])?, value(cols[2])?));
            }
        }
    }
    for (n, line) in lines {
        if !line?.trim().is_empty() {
            return Err(err(n, "data after the last declared element".into()));
        }
    }
    Ok(PointCloud {
        points,
        normals,
        descriptors: None,
    })
}

pub fn load_ply(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    read_ply(BufReader::new(File::open(path)?), path)
}
