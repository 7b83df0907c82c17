//! Linear SVM (hinge loss) and ordinary least squares.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Matrix;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum LinearTask {
    /// `classes[0]` is coded -1, `classes[1]` is coded +1.
    HingeClassifier { classes: [i64; 2] },
    OlsRegressor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    #[serde(flatten)]
    pub task: LinearTask,
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    /// Class label (ties go to the negative class) or regression value.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.cols() != self.weights.len() {
            return Err(Error::LengthMismatch(format!(
                "model has {} weights, input has {} features",
                self.weights.len(),
                x.cols()
            )));
        }
        Ok(x.iter_rows()
            .map(|row| {
                let f = self.decision(row);
                match self.task {
                    LinearTask::HingeClassifier { classes } => (if f > 0.0 { classes[1] } else { classes[0] }) as f64,
                    LinearTask::OlsRegressor => f,
                }
            })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SvmSolver {
    /// Exact dual coordinate descent on the box-constrained dual.
    #[default]
    DualCoordinateDescent,
    /// Full-batch subgradient descent, step `1 / (lambda t)`, tail averaging.
    Subgradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub c: f64,
    /// Passes over the data (an upper bound for the dual solver).
    pub epochs: usize,
    pub solver: SvmSolver,
    /// Dual solver stops once the projected-gradient spread falls below this.
    pub tol: f64,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: 1.0,
            epochs: 2000,
            solver: SvmSolver::default(),
            tol: 1e-9,
        }
    }
}

fn check_xy(x: &Matrix, y: &[f64]) -> Result<()> {
    if x.rows() != y.len() {
        return Err(Error::LengthMismatch(format!("{} rows, {} targets", x.rows(), y.len())));
    }
    if y.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    if !x.as_slice().iter().chain(y).all(|v| v.is_finite()) {
        return Err(Error::InvalidInput("training data contains non-finite values".into()));
    }
    Ok(())
}

/// Minimizes `lambda/2 |(w, b)|^2 + mean_i hinge(s_i (w.x_i + b))` with
/// `lambda = 1 / (c n)`. The bias is penalized like any weight.
pub fn train_linear_svm(x: &Matrix, labels: &[f64], params: &SvmParams, seed: u64) -> Result<LinearModel> {
    check_xy(x, labels)?;
    if !(params.c > 0.0 && params.c.is_finite()) || params.epochs == 0 {
        return Err(Error::InvalidInput("SVM needs c > 0 and at least one epoch".into()));
    }
    let mut classes: Vec<i64> = labels.iter().map(|&v| v as i64).collect();
    classes.sort_unstable();
    classes.dedup();
    match classes.len() {
        1 => return Err(Error::DegenerateLabels),
        2 => {}
        k => return Err(Error::InvalidInput(format!("SVM is binary, got {k} classes"))),
    }
    let classes = [classes[0], classes[1]];
    let signs: Vec<f64> = labels
        .iter()
        .map(|&v| if v as i64 == classes[1] { 1.0 } else { -1.0 })
        .collect();
    let w = match params.solver {
        SvmSolver::DualCoordinateDescent => dual_cd(x, &signs, params, seed),
        SvmSolver::Subgradient => subgradient(x, &signs, params),
    };
    let d = x.cols();
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("SVM diverged".into()));
    }
    Ok(LinearModel {
        task: LinearTask::HingeClassifier { classes },
        weights: w[..d].to_vec(),
        bias: w[d],
    })
}

/// Augmented parameter `(w, b)` against augmented feature `(x, 1)`.
fn aug_dot(w: &[f64], x: &[f64]) -> f64 {
    let d = x.len();
    w[..d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + w[d]
}

fn dual_cd(x: &Matrix, s: &[f64], params: &SvmParams, seed: u64) -> Vec<f64> {
    let (n, d) = (x.rows(), x.cols());
    let upper = params.c;
    let q: Vec<f64> = x.iter_rows().map(|r| r.iter().map(|v| v * v).sum::<f64>() + 1.0).collect();
    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; d + 1];
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rng::stream(seed);
    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        let (mut pg_max, mut pg_min) = (f64::NEG_INFINITY, f64::INFINITY);
        for &i in &order {
            let xi = x.row(i);
            let g = s[i] * aug_dot(&w, xi) - 1.0;
            let pg = if alpha[i] == 0.0 {
                g.min(0.0)
            } else if alpha[i] == upper {
                g.max(0.0)
            } else {
                g
            };
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg != 0.0 {
                let old = alpha[i];
                alpha[i] = (old - g / q[i]).clamp(0.0, upper);
                let step = (alpha[i] - old) * s[i];
                w[..d].iter_mut().zip(xi).for_each(|(wj, v)| *wj += step * v);
                w[d] += step;
            }
        }
        if pg_max - pg_min < params.tol {
            break;
        }
    }
    w
}

fn subgradient(x: &Matrix, s: &[f64], params: &SvmParams) -> Vec<f64> {
    let (n, d) = (x.rows(), x.cols());
    let lambda = 1.0 / (params.c * n as f64);
    let tail_start = params.epochs - (params.epochs / 10).max(1);
    let mut w = vec![0.0; d + 1];
    let mut avg = vec![0.0; d + 1];
    let mut grad = vec![0.0; d + 1];
    for t in 1..=params.epochs {
        grad.iter_mut().zip(&w).for_each(|(g, wj)| *g = lambda * wj);
        for (i, xi) in x.iter_rows().enumerate() {
            if s[i] * aug_dot(&w, xi) < 1.0 {
                let c = s[i] / n as f64;
                grad[..d].iter_mut().zip(xi).for_each(|(g, v)| *g -= c * v);
                grad[d] -= c;
            }
        }
        let eta = 1.0 / (lambda * t as f64);
        w.iter_mut().zip(&grad).for_each(|(wj, g)| *wj -= eta * g);
        if t > tail_start {
            avg.iter_mut().zip(&w).for_each(|(a, wj)| *a += wj);
        }
    }
    let k = (params.epochs - tail_start) as f64;
    avg.iter_mut().for_each(|a| *a /= k);
    avg
}

/// Householder QR of a tall matrix, kept in factored form.
struct Qr {
    n: usize,
    p: usize,
    /// Reflectors, column `k` holds `v_k` in rows `k..n`.
    v: Vec<Vec<f64>>,
    /// Upper triangle, column-major.
    r: Vec<Vec<f64>>,
}

impl Qr {
    fn new(mut cols: Vec<Vec<f64>>) -> Result<Qr> {
        let (n, p) = (cols[0].len(), cols.len());
        if n < p {
            return Err(Error::SingularDesign);
        }
        let mut v = Vec::with_capacity(p);
        for k in 0..p {
            let norm = cols[k][k..].iter().map(|a| a * a).sum::<f64>().sqrt();
            let mut vk = cols[k][k..].to_vec();
            let alpha = if vk[0] >= 0.0 { -norm } else { norm };
            vk[0] -= alpha;
            let vnorm2: f64 = vk.iter().map(|a| a * a).sum();
            if vnorm2 > 0.0 {
                for col in cols.iter_mut().skip(k) {
                    let dot: f64 = vk.iter().zip(&col[k..]).map(|(a, b)| a * b).sum();
                    let f = 2.0 * dot / vnorm2;
                    col[k..].iter_mut().zip(&vk).for_each(|(c, a)| *c -= f * a);
                }
            }
            v.push(vk);
        }
        let diag: Vec<f64> = (0..p).map(|k| cols[k][k].abs()).collect();
        let scale = diag.iter().cloned().fold(0.0, f64::max);
        if scale == 0.0 || diag.iter().any(|&r| r <= scale * 1e-12 * n.max(p) as f64) {
            return Err(Error::SingularDesign);
        }
        Ok(Qr { n, p, v, r: cols })
    }

    /// Least-squares solution of `A beta = y`.
    fn solve(&self, y: &[f64]) -> Vec<f64> {
        let mut qty = y.to_vec();
        for (k, vk) in self.v.iter().enumerate() {
            let vnorm2: f64 = vk.iter().map(|a| a * a).sum();
            if vnorm2 > 0.0 {
                let dot: f64 = vk.iter().zip(&qty[k..]).map(|(a, b)| a * b).sum();
                let f = 2.0 * dot / vnorm2;
                qty[k..].iter_mut().zip(vk).for_each(|(c, a)| *c -= f * a);
            }
        }
        let mut beta = vec![0.0; self.p];
        for k in (0..self.p).rev() {
            let tail: f64 = (k + 1..self.p).map(|j| self.r[j][k] * beta[j]).sum();
            beta[k] = (qty[k] - tail) / self.r[k][k];
        }
        debug_assert_eq!(qty.len(), self.n);
        beta
    }
}

/// Least squares with intercept, via Householder QR plus one refinement step.
pub fn train_ols(x: &Matrix, y: &[f64]) -> Result<LinearModel> {
    check_xy(x, y)?;
    let d = x.cols();
    let mut cols = vec![vec![1.0; x.rows()]];
    cols.extend((0..d).map(|j| x.col_values(j)));
    let design = cols.clone();
    let qr = Qr::new(cols)?;
    let mut beta = qr.solve(y);
    let resid: Vec<f64> = (0..x.rows())
        .map(|i| y[i] - design.iter().zip(&beta).map(|(c, b)| c[i] * b).sum::<f64>())
        .collect();
    let delta = qr.solve(&resid);
    beta.iter_mut().zip(delta).for_each(|(b, dlt)| *b += dlt);
    Ok(LinearModel {
        task: LinearTask::OlsRegressor,
        weights: beta[1..].to_vec(),
        bias: beta[0],
    })
}

/// `x1(x2) = -(b + w2 x2) / w1` for a two-feature classifier.
pub fn decision_boundary_1d(model: &LinearModel, x2_grid: &[f64]) -> Result<Vec<f64>> {
    if !matches!(model.task, LinearTask::HingeClassifier { .. }) || model.weights.len() != 2 {
        return Err(Error::InvalidInput("boundary needs a two-feature hinge classifier".into()));
    }
    let (w1, w2) = (model.weights[0], model.weights[1]);
    if w1 == 0.0 {
        return Err(Error::VerticalBoundary);
    }
    Ok(x2_grid.iter().map(|x2| -(model.bias + w2 * x2) / w1).collect())
}
