//! CSV and JSON files.
//!
//! One schema for every dataset the tool reads or writes:
//! `x_0..x_{dx-1}, y, z_0..z_{dz-1}[, provenance][, u_debug]`.

use std::collections::HashSet;
use std::path::Path;

use serde::Serialize;

use crate::bootstrap::DeconfoundedDataset;
use crate::data::{Matrix, ObservationalDataset, VarKind};
use crate::error::{Error, Result};

/// Shortest decimal string that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn fmt_value(v: f64, kind: VarKind) -> String {
    match kind {
        VarKind::Discrete => format!("{}", v as i64),
        VarKind::Continuous => fmt_f64(v),
    }
}

fn header(dx: usize, dz: usize, provenance: bool, u_debug: bool) -> Vec<String> {
    let mut h: Vec<String> = (0..dx).map(|j| format!("x_{j}")).collect();
    h.push("y".into());
    h.extend((0..dz).map(|j| format!("z_{j}")));
    if provenance {
        h.push("provenance".into());
    }
    if u_debug {
        h.push("u_debug".into());
    }
    h
}

fn create_dirs(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        _ => Ok(()),
    }
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    create_dirs(path)?;
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

#[allow(clippy::too_many_arguments)]
fn write_rows(
    path: &Path,
    x: &Matrix,
    y: &[f64],
    z: &Matrix,
    y_kind: VarKind,
    z_kind: VarKind,
    provenance: Option<&[usize]>,
    u_debug: Option<&[f64]>,
) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(header(x.cols(), z.cols(), provenance.is_some(), u_debug.is_some()))?;
    let mut record = Vec::new();
    for i in 0..y.len() {
        record.clear();
        record.extend(x.row(i).iter().map(|&v| fmt_f64(v)));
        record.push(fmt_value(y[i], y_kind));
        record.extend(z.row(i).iter().map(|&v| fmt_value(v, z_kind)));
        if let Some(p) = provenance {
            record.push(p[i].to_string());
        }
        if let Some(u) = u_debug {
            record.push(fmt_f64(u[i]));
        }
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_dataset(path: &Path, ds: &ObservationalDataset) -> Result<()> {
    write_rows(path, &ds.x, &ds.y, &ds.z, ds.y_kind, ds.z_kind, None, ds.u_debug.as_deref())
}

pub fn write_deconfounded(path: &Path, ds: &DeconfoundedDataset) -> Result<()> {
    write_rows(
        path,
        &ds.x,
        &ds.y_hat,
        &ds.z,
        ds.y_kind,
        ds.z_kind,
        Some(&ds.provenance),
        None,
    )
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    create_dirs(path)?;
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// A numeric CSV file held by column.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub source: String,
    pub headers: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Table> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let source = path.display().to_string();
        let mut r = csv::ReaderBuilder::new().flexible(true).from_reader(file);
        let headers: Vec<String> = r.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let mut seen = HashSet::new();
        if let Some(dup) = headers.iter().find(|h| !seen.insert(h.as_str())) {
            return Err(Error::Schema(format!("{source}: duplicate column `{dup}`")));
        }
        let mut columns = vec![Vec::new(); headers.len()];
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            if rec.len() != headers.len() {
                return Err(Error::Schema(format!(
                    "{source}: row {} has {} fields, header has {}",
                    line + 1,
                    rec.len(),
                    headers.len()
                )));
            }
            for ((col, field), name) in columns.iter_mut().zip(rec.iter()).zip(&headers) {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::Schema(format!("{source}: row {}, column `{name}`: `{field}` is not a number", line + 1))
                })?;
                col.push(v);
            }
        }
        if columns.first().is_none_or(Vec::is_empty) {
            return Err(Error::Schema(format!("{source}: no data rows")));
        }
        Ok(Table {
            source,
            headers,
            columns,
        })
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.headers
            .iter()
            .position(|h| h == name)
            .map(|i| self.columns[i].as_slice())
            .ok_or_else(|| Error::Schema(format!("{}: missing column `{name}`", self.source)))
    }

    fn matrix(&self, names: &[String]) -> Result<Matrix> {
        let cols = names.iter().map(|n| self.column(n)).collect::<Result<Vec<_>>>()?;
        let n = self.columns[0].len();
        let mut data = Vec::with_capacity(n * cols.len());
        for i in 0..n {
            data.extend(cols.iter().map(|c| c[i]));
        }
        Matrix::new(n, cols.len(), data)
    }

    /// Columns named `{prefix}_0, {prefix}_1, ...` in index order.
    pub fn indexed(&self, prefix: &str) -> Vec<String> {
        (0..)
            .map(|j| format!("{prefix}_{j}"))
            .take_while(|name| self.headers.contains(name))
            .collect()
    }

    /// Builds a dataset from named columns. Features default to every column
    /// that is not the cause, a mechanism, `provenance` or `u_debug`.
    pub fn dataset(&self, spec: &ColumnSpec) -> Result<ObservationalDataset> {
        let mechanism = if spec.mechanism.is_empty() {
            self.indexed("z")
        } else {
            spec.mechanism.clone()
        };
        if mechanism.is_empty() {
            return Err(Error::Schema(format!("{}: no mechanism columns (z_0, ...)", self.source)));
        }
        let features = match &spec.features {
            Some(f) => f.clone(),
            None => self
                .headers
                .iter()
                .filter(|h| {
                    **h != spec.cause && !mechanism.contains(h) && *h != "provenance" && *h != "u_debug"
                })
                .cloned()
                .collect(),
        };
        let y = self.column(&spec.cause)?.to_vec();
        let z = self.matrix(&mechanism)?;
        let x = self.matrix(&features)?;
        let ds = ObservationalDataset::new(x, y, z, spec.y_kind, spec.z_kind)
            .map_err(|e| Error::Schema(format!("{}: {e}", self.source)))?;
        match self.column("u_debug") {
            Ok(u) => ds.with_u_debug(u.to_vec()),
            Err(_) => Ok(ds),
        }
    }
}

/// Which columns play which role.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnSpec {
    pub cause: String,
    /// Empty means `z_0, z_1, ...`.
    pub mechanism: Vec<String>,
    pub features: Option<Vec<String>>,
    pub y_kind: VarKind,
    pub z_kind: VarKind,
}

impl ColumnSpec {
    pub fn standard(y_kind: VarKind, z_kind: VarKind) -> Self {
        ColumnSpec {
            cause: "y".into(),
            mechanism: Vec::new(),
            features: None,
            y_kind,
            z_kind,
        }
    }
}

/// Reads a file in the standard schema.
pub fn read_dataset(path: &Path, y_kind: VarKind, z_kind: VarKind) -> Result<ObservationalDataset> {
    Table::read(path)?.dataset(&ColumnSpec::standard(y_kind, z_kind))
}

/// Reads a deconfounded file back: the dataset plus its provenance column.
pub fn read_deconfounded(path: &Path, y_kind: VarKind, z_kind: VarKind) -> Result<(ObservationalDataset, Vec<usize>)> {
    let t = Table::read(path)?;
    let provenance = t
        .column("provenance")?
        .iter()
        .map(|&v| {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::Schema(format!("{}: provenance value {v} is not a row index", t.source)))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((t.dataset(&ColumnSpec::standard(y_kind, z_kind))?, provenance))
}
