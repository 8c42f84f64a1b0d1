//! File formats: partial-matrix CSV with `?` for unknown entries, distance
//! edge lists, dense matrix CSV, XYZ point files, and key=value reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::matrix::{DenseMatrix, PartialMatrix};
use crate::protein::PointCloud;

pub const UNKNOWN_TOKEN: &str = "?";
pub const SYMMETRIC_HEADER: &str = "# symmetric";

fn parse_value(token: &str, line: usize) -> Result<f64> {
    let v: f64 = token.parse().map_err(|_| Error::Parse {
        line,
        message: format!("bad value {token:?}"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("non-finite value {token:?}"),
        });
    }
    Ok(v)
}

/// Rectangular grid of decimals and `?`. An optional first line
/// `# symmetric` marks the matrix symmetric; it must then be square with a
/// symmetric pattern and values.
pub fn parse_partial_matrix(text: &str) -> Result<PartialMatrix> {
    let mut lines = text.lines().enumerate().peekable();
    let mut symmetric = false;
    if let Some((_, first)) = lines.peek() {
        if first.trim() == SYMMETRIC_HEADER {
            symmetric = true;
            lines.next();
        }
    }
    let mut rows: Vec<Vec<Option<f64>>> = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        let t = raw.trim();
        if t.is_empty() {
            continue;
        }
        let row = t
            .split(',')
            .map(|cell| match cell.trim() {
                UNKNOWN_TOKEN => Ok(None),
                tok => parse_value(tok, line).map(Some),
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {} cells, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    let (m, n) = (rows.len(), rows[0].len());
    let mut p = if symmetric {
        if m != n {
            return Err(Error::NotSquare(m, n));
        }
        PartialMatrix::new_symmetric(n)
    } else {
        PartialMatrix::new(m, n)
    };
    for (i, row) in rows.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            if symmetric && *cell != rows[j][i] {
                return Err(Error::InvalidArgument(format!("cells ({i}, {j}) and ({j}, {i}) differ in a symmetric file")));
            }
            if let Some(v) = cell {
                p.set(i, j, *v)?;
            }
        }
    }
    Ok(p)
}

/// Inverse of [`parse_partial_matrix`]; values use the shortest exact
/// decimal form.
pub fn write_partial_matrix(p: &PartialMatrix) -> String {
    let (m, n) = p.shape();
    let mut out = String::new();
    if p.is_symmetric() {
        out.push_str(SYMMETRIC_HEADER);
        out.push('\n');
    }
    for i in 0..m {
        let cells: Vec<String> = (0..n)
            .map(|j| p.get(i, j).map_or_else(|| UNKNOWN_TOKEN.to_string(), |v| v.to_string()))
            .collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// `i j d` lines, 1-based, unsquared distances. Returns the symmetric
/// partial matrix of squared distances with a known zero diagonal; `n`
/// defaults to the largest index seen.
pub fn parse_edge_list(text: &str, n: Option<usize>) -> Result<PartialMatrix> {
    let mut edges = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = t.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty()).collect();
        if f.len() != 3 {
            return Err(Error::Parse {
                line,
                message: format!("expected `i j d`, found {} fields", f.len()),
            });
        }
        let index = |s: &str| -> Result<usize> {
            match s.parse::<usize>() {
                Ok(k) if k >= 1 => Ok(k - 1),
                _ => Err(Error::Parse {
                    line,
                    message: format!("bad 1-based index {s:?}"),
                }),
            }
        };
        let d = parse_value(f[2], line)?;
        if d < 0.0 {
            return Err(Error::Parse {
                line,
                message: "negative distance".into(),
            });
        }
        edges.push((line, index(f[0])?, index(f[1])?, d * d));
    }
    if edges.is_empty() {
        return Err(Error::EmptyInput);
    }
    let seen = edges.iter().map(|&(_, i, j, _)| i.max(j) + 1).max().unwrap_or(0);
    let n = n.unwrap_or(seen);
    if seen > n {
        return Err(Error::InvalidArgument(format!("edge index {seen} exceeds {n} points")));
    }
    let mut p = PartialMatrix::new_symmetric(n);
    for i in 0..n {
        p.set(i, i, 0.0)?;
    }
    for (line, i, j, d2) in edges {
        if i == j && d2 != 0.0 {
            return Err(Error::Parse {
                line,
                message: "nonzero self-distance".into(),
            });
        }
        match p.get(i, j) {
            Some(prev) if prev != d2 => {
                return Err(Error::Parse {
                    line,
                    message: format!("conflicting distance for pair ({}, {})", i + 1, j + 1),
                })
            }
            _ => p.set(i, j, d2)?,
        }
    }
    Ok(p)
}

pub fn write_matrix_csv(m: &DenseMatrix) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let cells: Vec<String> = (0..m.ncols()).map(|j| m[(i, j)].to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// A fully known grid.
pub fn parse_matrix_csv(text: &str) -> Result<DenseMatrix> {
    let p = parse_partial_matrix(text)?;
    let (m, n) = p.shape();
    if p.known_count() != m * n {
        return Err(Error::InvalidArgument("dense matrix file contains unknown entries".into()));
    }
    Ok(p.to_dense(0.0))
}

/// `x,y,z[,label]` lines, readable by [`crate::protein::parse_points`].
pub fn write_xyz(cloud: &PointCloud) -> String {
    let mut out = String::new();
    for (k, p) in cloud.points.iter().enumerate() {
        let _ = write!(out, "{},{},{}", p[0], p[1], p[2]);
        if let Some(label) = cloud.labels.as_ref().and_then(|l| l.get(k)).filter(|l| !l.is_empty()) {
            let _ = write!(out, ",{label}");
        }
        out.push('\n');
    }
    out
}

/// Floats as 12 significant digits.
pub fn format_float(v: f64) -> String {
    format!("{v:.11e}")
}

/// `key=value` lines in sorted key order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Report {
    entries: BTreeMap<String, String>,
}

impl Report {
    pub fn new() -> Self {
        Report::default()
    }

    pub fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        let value = value.to_string();
        debug_assert!(!key.contains('=') && !key.contains('\n') && !value.contains('\n'));
        self.entries.insert(key.to_string(), value);
        self
    }

    pub fn set_float(&mut self, key: &str, value: f64) -> &mut Self {
        self.set(key, format_float(value))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn remove(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Copy without the given keys, e.g. wall-clock timings.
    pub fn without(&self, keys: &[&str]) -> Report {
        let mut r = self.clone();
        for k in keys {
            r.entries.remove(*k);
        }
        r
    }

    pub fn emit(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Report> {
        let mut r = Report::new();
        for (idx, raw) in text.lines().enumerate() {
            if raw.trim().is_empty() {
                continue;
            }
            let (k, v) = raw.split_once('=').ok_or_else(|| Error::Parse {
                line: idx + 1,
                message: "expected key=value".into(),
            })?;
            r.entries.insert(k.to_string(), v.to_string());
        }
        Ok(r)
    }
}
