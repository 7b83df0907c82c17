//! Baseline learners and evaluation.

pub mod knn;
pub mod linear;
pub mod metrics;

use serde::{Deserialize, Serialize};

use crate::data::Matrix;
use crate::error::{Error, Result};

pub use knn::{KnnModel, KnnReference};
pub use linear::{decision_boundary_1d, train_linear_svm, train_ols, LinearModel, LinearTask, SvmParams, SvmSolver};
pub use metrics::{evaluate, ClassCounts, EvalReport, Metric};

/// Per-feature z-scoring, fit on training data only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Constant features get unit scale so they pass through centered.
    pub fn fit(x: &Matrix) -> Result<Self> {
        if x.rows() == 0 {
            return Err(Error::InvalidInput("cannot standardize an empty matrix".into()));
        }
        let n = x.rows() as f64;
        let mut mean = vec![0.0; x.cols()];
        for row in x.iter_rows() {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v / n);
        }
        let mut var = vec![0.0; x.cols()];
        for row in x.iter_rows() {
            var.iter_mut().zip(row).zip(&mean).for_each(|((s, v), m)| *s += (v - m).powi(2) / n);
        }
        let std = var.into_iter().map(|v| if v > 0.0 { v.sqrt() } else { 1.0 }).collect();
        Ok(Standardizer { mean, std })
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.mean.len() {
            return Err(Error::LengthMismatch(format!(
                "standardizer fit on {} features, got {}",
                self.mean.len(),
                x.cols()
            )));
        }
        let mut out = x.clone();
        for i in 0..out.rows() {
            for ((v, m), s) in out.row_mut(i).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standardizer_centers_and_scales() {
        let x = Matrix::from_rows(&[vec![1.0, 5.0], vec![3.0, 5.0]]).unwrap();
        let s = Standardizer::fit(&x).unwrap();
        let t = s.apply(&x).unwrap();
        assert_eq!(t.row(0), &[-1.0, 0.0]);
        assert_eq!(t.row(1), &[1.0, 0.0]);
    }
}
