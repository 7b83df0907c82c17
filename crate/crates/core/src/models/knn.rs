//! Brute-force k-nearest-neighbour classifier.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    k: usize,
    bank: Matrix,
    labels: Vec<i64>,
}

/// What a saved kNN model records: the bank is referenced, not embedded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnnReference {
    pub task: String,
    pub k: usize,
    pub bank_size: usize,
    pub bank_sha256: String,
}

impl KnnModel {
    pub fn new(k: usize, bank: Matrix, labels: &[f64]) -> Result<Self> {
        if bank.rows() != labels.len() {
            return Err(Error::LengthMismatch(format!("{} bank rows, {} labels", bank.rows(), labels.len())));
        }
        if bank.rows() == 0 {
            return Err(Error::InvalidInput("kNN bank is empty".into()));
        }
        if k == 0 || k > bank.rows() {
            return Err(Error::InvalidInput(format!("k = {k} must lie in 1..={}", bank.rows())));
        }
        if !bank.as_slice().iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("kNN bank contains non-finite values".into()));
        }
        Ok(KnnModel {
            k,
            bank,
            labels: labels.iter().map(|&v| v as i64).collect(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn reference(&self) -> KnnReference {
        let mut h = Sha256::new();
        h.update((self.bank.rows() as u64).to_le_bytes());
        h.update((self.bank.cols() as u64).to_le_bytes());
        for v in self.bank.as_slice() {
            h.update(v.to_le_bytes());
        }
        for l in &self.labels {
            h.update(l.to_le_bytes());
        }
        KnnReference {
            task: "knn".into(),
            k: self.k,
            bank_size: self.bank.rows(),
            bank_sha256: hex::encode(h.finalize()),
        }
    }

    /// Majority label among the `k` nearest bank points. Distance ties go to
    /// the lower bank row, vote ties to the smaller label.
    pub fn predict(&self, queries: &Matrix) -> Result<Vec<f64>> {
        if queries.cols() != self.bank.cols() {
            return Err(Error::LengthMismatch(format!(
                "bank has {} features, queries have {}",
                self.bank.cols(),
                queries.cols()
            )));
        }
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(self.k + 1);
        let mut votes: Vec<(i64, usize)> = Vec::with_capacity(self.k);
        Ok(queries
            .iter_rows()
            .map(|q| {
                best.clear();
                for (j, row) in self.bank.iter_rows().enumerate() {
                    let bound = if best.len() == self.k { best[self.k - 1].0 } else { f64::INFINITY };
                    let d = sq_dist_bounded(q, row, bound);
                    if d < bound {
                        let at = best.partition_point(|&(bd, _)| bd <= d);
                        best.insert(at, (d, j));
                        best.truncate(self.k);
                    }
                }
                votes.clear();
                for &(_, j) in &best {
                    let label = self.labels[j];
                    match votes.iter_mut().find(|(l, _)| *l == label) {
                        Some(v) => v.1 += 1,
                        None => votes.push((label, 1)),
                    }
                }
                let (label, _) = votes
                    .iter()
                    .copied()
                    .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
                    .expect("k >= 1");
                label as f64
            })
            .collect())
    }
}

/// Squared distance, abandoned early once it reaches `bound`. Partial sums
/// only grow, so an abandoned value is still `>= bound`.
fn sq_dist_bounded(a: &[f64], b: &[f64], bound: f64) -> f64 {
    const BLOCK: usize = 64;
    let mut acc = 0.0;
    for (ca, cb) in a.chunks(BLOCK).zip(b.chunks(BLOCK)) {
        let mut lanes = [0.0f64; 4];
        let mut ia = ca.chunks_exact(4);
        let mut ib = cb.chunks_exact(4);
        for (xa, xb) in (&mut ia).zip(&mut ib) {
            for l in 0..4 {
                let d = xa[l] - xb[l];
                lanes[l] += d * d;
            }
        }
        for (x, y) in ia.remainder().iter().zip(ib.remainder()) {
            lanes[0] += (x - y) * (x - y);
        }
        acc += (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
        if acc >= bound {
            break;
        }
    }
    acc
}
