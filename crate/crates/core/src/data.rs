//! Observational data containers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether a variable takes values in a finite set (integer coded) or on the real line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarKind {
    Discrete,
    Continuous,
}

impl std::str::FromStr for VarKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "discrete" => Ok(VarKind::Discrete),
            "continuous" => Ok(VarKind::Continuous),
            other => Err(Error::InvalidInput(format!(
                "variable kind must be `discrete` or `continuous`, got `{other}`"
            ))),
        }
    }
}

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::LengthMismatch(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Single-column matrix.
    pub fn column(values: Vec<f64>) -> Self {
        Matrix {
            rows: values.len(),
            cols: 1,
            data: values,
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::LengthMismatch("ragged rows".into()));
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        // chunks_exact panics on a zero chunk size
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn col_values(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// New matrix made of the given rows, in order.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    /// New matrix with columns reordered by `order`.
    pub fn permute_cols(&self, order: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.iter_rows() {
            data.extend(order.iter().map(|&j| row[j]));
        }
        Matrix {
            rows: self.rows,
            cols: order.len(),
            data,
        }
    }
}

/// Aligned samples `(x_n, y_n, z_n)`: features, cause, mechanism.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationalDataset {
    pub x: Matrix,
    pub y: Vec<f64>,
    pub z: Matrix,
    pub y_kind: VarKind,
    pub z_kind: VarKind,
    /// Latent confounder, kept for diagnostics only. Never used by the bootstrap.
    pub u_debug: Option<Vec<f64>>,
}

impl ObservationalDataset {
    pub fn new(x: Matrix, y: Vec<f64>, z: Matrix, y_kind: VarKind, z_kind: VarKind) -> Result<Self> {
        let ds = ObservationalDataset {
            x,
            y,
            z,
            y_kind,
            z_kind,
            u_debug: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn with_u_debug(mut self, u: Vec<f64>) -> Result<Self> {
        if u.len() != self.len() {
            return Err(Error::LengthMismatch("u_debug length differs from N".into()));
        }
        self.u_debug = Some(u);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.y.len();
        if n == 0 {
            return Err(Error::InvalidInput("dataset is empty".into()));
        }
        if self.x.rows() != n || self.z.rows() != n {
            return Err(Error::LengthMismatch(format!(
                "X has {} rows, Y has {n}, Z has {}",
                self.x.rows(),
                self.z.rows()
            )));
        }
        if self.z.cols() == 0 {
            return Err(Error::InvalidInput("mechanism must have at least one dimension".into()));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(self.x.as_slice()) || !finite(&self.y) || !finite(self.z.as_slice()) {
            return Err(Error::InvalidInput("dataset contains non-finite values".into()));
        }
        if self.y_kind == VarKind::Discrete && self.y.iter().any(|v| v.fract() != 0.0) {
            return Err(Error::KindMismatch("cause declared discrete but has non-integer values".into()));
        }
        if self.z_kind == VarKind::Discrete && self.z.as_slice().iter().any(|v| v.fract() != 0.0) {
            return Err(Error::KindMismatch(
                "mechanism declared discrete but has non-integer values".into(),
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dx(&self) -> usize {
        self.x.cols()
    }

    pub fn dz(&self) -> usize {
        self.z.cols()
    }

    /// Sorted distinct labels of a discrete cause.
    pub fn labels(&self) -> Vec<i64> {
        let mut labels: Vec<i64> = self.y.iter().map(|&v| v as i64).collect();
        labels.sort_unstable();
        labels.dedup();
        labels
    }

    pub fn select_rows(&self, indices: &[usize]) -> ObservationalDataset {
        ObservationalDataset {
            x: self.x.select_rows(indices),
            y: indices.iter().map(|&i| self.y[i]).collect(),
            z: self.z.select_rows(indices),
            y_kind: self.y_kind,
            z_kind: self.z_kind,
            u_debug: self
                .u_debug
                .as_ref()
                .map(|u| indices.iter().map(|&i| u[i]).collect()),
        }
    }
}
