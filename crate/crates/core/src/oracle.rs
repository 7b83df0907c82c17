//! Exact front-door adjustment on finite joint tables.
//!
//! `p(x | do(y)) = sum_z p(z | y) sum_y' p(x | y', z) p(y')`, enumerated cell by
//! cell. Used as the independent reference for the resampler.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Joint probability table `p(x, y, z)` over finite, integer-coded value sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointTable {
    pub x_values: Vec<i64>,
    pub y_values: Vec<i64>,
    pub z_values: Vec<i64>,
    /// Row-major `[x][y][z]`.
    pub p: Vec<f64>,
}

impl JointTable {
    pub fn new(x_values: Vec<i64>, y_values: Vec<i64>, z_values: Vec<i64>, p: Vec<f64>) -> Result<Self> {
        if p.len() != x_values.len() * y_values.len() * z_values.len() {
            return Err(Error::LengthMismatch(format!(
                "table needs {} cells, got {}",
                x_values.len() * y_values.len() * z_values.len(),
                p.len()
            )));
        }
        if p.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidInput("table entries must be finite and non-negative".into()));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("table sums to {total}, not 1")));
        }
        Ok(JointTable {
            x_values,
            y_values,
            z_values,
            p,
        })
    }

    /// Empirical joint of aligned integer-coded samples.
    pub fn from_samples(x: &[i64], y: &[i64], z: &[i64]) -> Result<Self> {
        if x.len() != y.len() || y.len() != z.len() || x.is_empty() {
            return Err(Error::LengthMismatch("samples must be aligned and non-empty".into()));
        }
        let distinct = |v: &[i64]| {
            let mut d = v.to_vec();
            d.sort_unstable();
            d.dedup();
            d
        };
        let (xv, yv, zv) = (distinct(x), distinct(y), distinct(z));
        let mut p = vec![0.0; xv.len() * yv.len() * zv.len()];
        let inc = 1.0 / x.len() as f64;
        for ((a, b), c) in x.iter().zip(y).zip(z) {
            let i = xv.binary_search(a).unwrap();
            let j = yv.binary_search(b).unwrap();
            let k = zv.binary_search(c).unwrap();
            p[(i * yv.len() + j) * zv.len() + k] += inc;
        }
        // renormalize away accumulated rounding
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= total);
        JointTable::new(xv, yv, zv, p)
    }

    pub fn prob(&self, xi: usize, yi: usize, zi: usize) -> f64 {
        self.p[(xi * self.y_values.len() + yi) * self.z_values.len() + zi]
    }

    pub fn p_y(&self, yi: usize) -> f64 {
        (0..self.x_values.len())
            .flat_map(|xi| (0..self.z_values.len()).map(move |zi| (xi, zi)))
            .map(|(xi, zi)| self.prob(xi, yi, zi))
            .sum()
    }

    pub fn p_yz(&self, yi: usize, zi: usize) -> f64 {
        (0..self.x_values.len()).map(|xi| self.prob(xi, yi, zi)).sum()
    }

    /// Observational conditional `p(x | y)`.
    pub fn conditional_x_given_y(&self, y: i64) -> Result<Vec<f64>> {
        let yi = self.y_index(y)?;
        let py = self.p_y(yi);
        if py == 0.0 {
            return Err(Error::IllPosedOracle(format!("p(y = {y}) = 0")));
        }
        Ok((0..self.x_values.len())
            .map(|xi| (0..self.z_values.len()).map(|zi| self.prob(xi, yi, zi)).sum::<f64>() / py)
            .collect())
    }

    fn y_index(&self, y: i64) -> Result<usize> {
        self.y_values
            .iter()
            .position(|&v| v == y)
            .ok_or_else(|| Error::IllPosedOracle(format!("y = {y} is not in the table")))
    }
}

/// Interventional distribution `p(x | do(y))` by the front-door adjustment,
/// indexed like `joint.x_values`.
pub fn oracle_frontdoor_distribution(joint: &JointTable, y: i64) -> Result<Vec<f64>> {
    let yi = joint.y_index(y)?;
    let py = joint.p_y(yi);
    if py == 0.0 {
        return Err(Error::IllPosedOracle(format!("p(y = {y}) = 0, so p(z | y) is undefined")));
    }
    let (nx, ny, nz) = (joint.x_values.len(), joint.y_values.len(), joint.z_values.len());
    let p_y: Vec<f64> = (0..ny).map(|j| joint.p_y(j)).collect();
    let mut out = vec![0.0; nx];
    for zi in 0..nz {
        let p_z_given_y = joint.p_yz(yi, zi) / py;
        if p_z_given_y == 0.0 {
            continue;
        }
        for (yj, &p_yj) in p_y.iter().enumerate() {
            if p_yj == 0.0 {
                continue;
            }
            let p_yz = joint.p_yz(yj, zi);
            if p_yz == 0.0 {
                return Err(Error::IllPosedOracle(format!(
                    "p(y' = {}, z = {}) = 0 but the term has weight p(z | y) p(y') > 0",
                    joint.y_values[yj], joint.z_values[zi]
                )));
            }
            for (xi, slot) in out.iter_mut().enumerate() {
                *slot += p_z_given_y * (joint.prob(xi, yj, zi) / p_yz) * p_yj;
            }
        }
    }
    Ok(out)
}

/// Total-variation distance between two distributions on the same support.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0
}
