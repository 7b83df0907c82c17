//! Structural causal models for the three benchmark datasets.
//!
//! Binary variables live on `{1, 2}` and a "Bernoulli(p)" draw yields 2 with
//! probability `p`.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::data::{Matrix, ObservationalDataset, VarKind};
use crate::error::{Error, Result};
use crate::mnist::ImageBank;
use crate::oracle::JointTable;
use crate::rng;

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn bernoulli12(rng: &mut rng::Rng, p: f64) -> f64 {
    if rng.random::<f64>() < p {
        2.0
    } else {
        1.0
    }
}

fn pick(v: f64, on_one: f64, on_two: f64) -> f64 {
    if v == 1.0 {
        on_one
    } else {
        on_two
    }
}

/// Parameters of the classification SCM. Pairs are indexed `[value 1, value 2]`
/// (or `[negative, positive]` for the sign of the mechanism).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassificationScmConfig {
    /// P(U = 2).
    pub p_u: f64,
    /// P(Y = 2 | U = u).
    pub q_y: [f64; 2],
    /// Mean of Z given Y.
    pub mu_z: [f64; 2],
    /// Mean of X1 given sign(Z).
    pub mu_x1: [f64; 2],
    /// Mean of X2 given U.
    pub mu_x2: [f64; 2],
}

impl Default for ClassificationScmConfig {
    fn default() -> Self {
        ClassificationScmConfig {
            p_u: 0.25,
            q_y: [0.2, 0.8],
            mu_z: [-1.2, 1.2],
            mu_x1: [-1.8, 1.8],
            mu_x2: [-2.4, 2.4],
        }
    }
}

impl ClassificationScmConfig {
    fn validate(&self) -> Result<()> {
        let probs = [self.p_u, self.q_y[0], self.q_y[1]];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidInput(format!("probabilities must lie in [0, 1]: {probs:?}")));
        }
        let means = self.mu_z.iter().chain(&self.mu_x1).chain(&self.mu_x2);
        if means.into_iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidInput("means must be finite".into()));
        }
        Ok(())
    }

    /// P(Y = 2 | U = u), with the U -> Y edge cut when not confounded.
    fn p_y(&self, u: f64, confounded: bool) -> f64 {
        if confounded {
            pick(u, self.q_y[0], self.q_y[1])
        } else {
            0.5
        }
    }
}

/// Classification data: discrete Y, continuous scalar Z, X = (X1, X2).
///
/// `confounded = false` sets P(Y = 2 | U) to 0.5 for every U.
pub fn gen_classification(
    n: usize,
    cfg: &ClassificationScmConfig,
    confounded: bool,
    seed: u64,
) -> Result<ObservationalDataset> {
    if n == 0 {
        return Err(Error::InvalidInput("sample count must be at least 1".into()));
    }
    cfg.validate()?;
    let mut rng = rng::stream(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let (mut x, mut y, mut z, mut u) = (
        Vec::with_capacity(2 * n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for _ in 0..n {
        let un = bernoulli12(&mut rng, cfg.p_u);
        let yn = bernoulli12(&mut rng, cfg.p_y(un, confounded));
        let zn = pick(yn, cfg.mu_z[0], cfg.mu_z[1]) + unit.sample(&mut rng);
        let mu_x1 = if zn > 0.0 { cfg.mu_x1[1] } else { cfg.mu_x1[0] };
        let x1 = mu_x1 + unit.sample(&mut rng);
        let x2 = pick(un, cfg.mu_x2[0], cfg.mu_x2[1]) + unit.sample(&mut rng);
        x.extend([x1, x2]);
        y.push(yn);
        z.push(zn);
        u.push(un);
    }
    ObservationalDataset::new(
        Matrix::new(n, 2, x)?,
        y,
        Matrix::column(z),
        VarKind::Discrete,
        VarKind::Continuous,
    )?
    .with_u_debug(u)
}

/// Which discretized features the oracle table carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleFeatures {
    /// `x = sign(X1)` coded -1 / +1.
    X1Sign,
    /// `x = 2 * [X1 > 0] + [X2 > 0]`, coded 0..=3; keeps the U -> X2 path.
    X1X2Signs,
}

/// Exact joint over (discretized X, Y, sign(Z)) of the classification SCM,
/// with U marginalized analytically.
pub fn discretize_for_oracle(
    cfg: &ClassificationScmConfig,
    confounded: bool,
    features: OracleFeatures,
) -> Result<JointTable> {
    cfg.validate()?;
    let bern = |p: f64, v: usize| if v == 1 { p } else { 1.0 - p };
    // index 0 -> negative sign, 1 -> positive
    let p_z_pos = |y: usize| std_normal_cdf(cfg.mu_z[y]);
    let p_x1_pos = |zs: usize| std_normal_cdf(cfg.mu_x1[zs]);
    let p_x2_pos = |u: usize| std_normal_cdf(cfg.mu_x2[u]);

    let x_values: Vec<i64> = match features {
        OracleFeatures::X1Sign => vec![-1, 1],
        OracleFeatures::X1X2Signs => vec![0, 1, 2, 3],
    };
    let nx = x_values.len();
    let mut p = vec![0.0; nx * 4];
    for u in 0..2 {
        let pu = bern(cfg.p_u, u);
        let py2 = cfg.p_y(u as f64 + 1.0, confounded);
        for y in 0..2 {
            let py = bern(py2, y);
            for zs in 0..2 {
                let pz = bern(p_z_pos(y), zs);
                for xi in 0..nx {
                    let px = match features {
                        OracleFeatures::X1Sign => bern(p_x1_pos(zs), xi),
                        OracleFeatures::X1X2Signs => bern(p_x1_pos(zs), xi / 2) * bern(p_x2_pos(u), xi % 2),
                    };
                    p[(xi * 2 + y) * 2 + zs] += pu * py * pz * px;
                }
            }
        }
    }
    JointTable::new(x_values, vec![1, 2], vec![-1, 1], p)
}

/// Encodes classification samples the way [`discretize_for_oracle`] codes its cells.
pub fn discretize_samples(ds: &ObservationalDataset, features: OracleFeatures) -> (Vec<i64>, Vec<i64>, Vec<i64>) {
    let sign = |v: f64| if v > 0.0 { 1 } else { -1 };
    let x = ds
        .x
        .iter_rows()
        .map(|r| match features {
            OracleFeatures::X1Sign => sign(r[0]),
            OracleFeatures::X1X2Signs => 2 * i64::from(r[0] > 0.0) + i64::from(r[1] > 0.0),
        })
        .collect();
    let y = ds.y.iter().map(|&v| v as i64).collect();
    let z = ds.z.iter_rows().map(|r| sign(r[0])).collect();
    (x, y, z)
}

/// Linear-Gaussian regression SCM:
/// `Y = a0 + a1 U + e_Y`, `Z = b Y + e_Z`, `X = c0 U + c1 Z + e_X`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressionScmConfig {
    pub a0: f64,
    pub a1: f64,
    pub b: f64,
    pub c0: f64,
    pub c1: f64,
    pub noise_std: f64,
    pub u_std: f64,
}

impl RegressionScmConfig {
    pub fn confounded() -> Self {
        RegressionScmConfig {
            a0: 2.0,
            a1: 1.0,
            b: 1.5,
            c0: 5.0,
            c1: 1.0,
            noise_std: 1.0,
            u_std: 1.0,
        }
    }

    pub fn non_confounded() -> Self {
        RegressionScmConfig {
            c0: 0.0,
            ..Self::confounded()
        }
    }
}

impl Default for RegressionScmConfig {
    fn default() -> Self {
        Self::confounded()
    }
}

pub fn gen_regression(n: usize, cfg: &RegressionScmConfig, seed: u64) -> Result<ObservationalDataset> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("regression data needs n >= 2, got {n}")));
    }
    if !(cfg.noise_std > 0.0 && cfg.u_std > 0.0) {
        return Err(Error::InvalidInput("noise and confounder std must be positive".into()));
    }
    let mut rng = rng::stream(seed);
    let noise = Normal::new(0.0, cfg.noise_std).expect("valid std");
    let latent = Normal::new(0.0, cfg.u_std).expect("valid std");
    let (mut x, mut y, mut z, mut u) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for _ in 0..n {
        let un = latent.sample(&mut rng);
        let yn = cfg.a0 + cfg.a1 * un + noise.sample(&mut rng);
        let zn = cfg.b * yn + noise.sample(&mut rng);
        let xn = cfg.c0 * un + cfg.c1 * zn + noise.sample(&mut rng);
        x.push(xn);
        y.push(yn);
        z.push(zn);
        u.push(un);
    }
    ObservationalDataset::new(
        Matrix::column(x),
        y,
        Matrix::column(z),
        VarKind::Continuous,
        VarKind::Continuous,
    )?
    .with_u_debug(u)
}

/// Background-brightness MNIST SCM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackgroundMnistConfig {
    /// Confounding strength; 0.5 removes the U -> Y edge.
    pub q: f64,
    /// P(Z = 2 | Y = y), indexed `[y = 1, y = 2]`.
    pub r_z: [f64; 2],
    /// Standard deviation of the confounder U.
    pub u_std: f64,
    pub brightness_scale: f64,
    /// Digit shown for Z = 1 and Z = 2.
    pub digits: [u8; 2],
}

impl Default for BackgroundMnistConfig {
    fn default() -> Self {
        BackgroundMnistConfig {
            q: 0.8,
            r_z: [0.05, 0.95],
            u_std: 5.0,
            brightness_scale: 100.0,
            digits: [2, 6],
        }
    }
}

impl BackgroundMnistConfig {
    pub fn non_confounded() -> Self {
        BackgroundMnistConfig {
            q: 0.5,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        let open_unit = |p: f64| p > 0.0 && p < 1.0;
        if !open_unit(self.q) || !self.r_z.iter().all(|&p| open_unit(p)) {
            return Err(Error::InvalidInput(format!(
                "q and r_z must lie in (0, 1): q = {}, r_z = {:?}",
                self.q, self.r_z
            )));
        }
        if !(self.u_std > 0.0 && self.brightness_scale.is_finite()) {
            return Err(Error::InvalidInput("u_std must be positive".into()));
        }
        Ok(())
    }

    /// `q^u / (q^u + (1 - q)^u)`, evaluated as a logistic in `u`.
    pub fn q_y(&self, u: f64) -> f64 {
        let logit = u * (self.q / (1.0 - self.q)).ln();
        1.0 / (1.0 + (-logit).exp())
    }

    /// Background brightness offset `scale * (atan(u / 5) / 2 + 1/2)`.
    pub fn brightness(&self, u: f64) -> f64 {
        self.brightness_scale * (0.5 * (u / 5.0).atan() + 0.5)
    }
}

/// Pixel transform: add the brightness offset, clamp to the byte range, scale to [0, 1].
pub fn brighten(pixel: u8, offset: f64) -> f64 {
    (pixel as f64 + offset).clamp(0.0, 255.0) / 255.0
}

/// Draws images per digit without replacement, reshuffling a digit's pool
/// once it is exhausted.
struct ImagePool {
    order: Vec<usize>,
    next: usize,
}

impl ImagePool {
    fn draw(&mut self, rng: &mut rng::Rng) -> usize {
        use rand::seq::SliceRandom;
        if self.next == 0 || self.next >= self.order.len() {
            self.order.shuffle(rng);
            self.next = 0;
        }
        let i = self.order[self.next];
        self.next += 1;
        i
    }
}

/// Background-MNIST data: discrete Y and Z on `{1, 2}`, X the 784 brightened
/// pixels of an image of the digit selected by Z.
pub fn gen_background_mnist(
    n: usize,
    cfg: &BackgroundMnistConfig,
    bank: &ImageBank,
    seed: u64,
) -> Result<ObservationalDataset> {
    if n == 0 {
        return Err(Error::InvalidInput("sample count must be at least 1".into()));
    }
    cfg.validate()?;
    let mut pools = Vec::with_capacity(2);
    for digit in cfg.digits {
        let rows = bank.rows_for(digit);
        if rows.is_empty() {
            return Err(Error::InvalidInput(format!("image bank has no images of digit {digit}")));
        }
        pools.push(ImagePool {
            order: rows.to_vec(),
            next: 0,
        });
    }
    let mut rng = rng::stream(seed);
    let latent = Normal::new(0.0, cfg.u_std).expect("valid std");
    let d = bank.pixels_per_image();
    let (mut x, mut y, mut z, mut u) = (
        Vec::with_capacity(n * d),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for _ in 0..n {
        let un = latent.sample(&mut rng);
        let yn = bernoulli12(&mut rng, cfg.q_y(un));
        let zn = bernoulli12(&mut rng, pick(yn, cfg.r_z[0], cfg.r_z[1]));
        let row = pools[zn as usize - 1].draw(&mut rng);
        let offset = cfg.brightness(un);
        x.extend(bank.image(row).iter().map(|&p| brighten(p, offset)));
        y.push(yn);
        z.push(zn);
        u.push(un);
    }
    ObservationalDataset::new(Matrix::new(n, d, x)?, y, Matrix::column(z), VarKind::Discrete, VarKind::Discrete)?
        .with_u_debug(u)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean(v: &[f64]) -> f64 {
        v.iter().sum::<f64>() / v.len() as f64
    }

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let (ma, mb) = (mean(a), mean(b));
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
        let (mx, my) = (mean(x), mean(y));
        let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let var: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        cov / var
    }

    fn indicator(v: &[f64]) -> Vec<f64> {
        v.iter().map(|&x| f64::from(x == 2.0)).collect()
    }

    #[test]
    fn classification_non_confounded_cuts_u_to_y() {
        let ds = gen_classification(50_000, &ClassificationScmConfig::default(), false, 1).unwrap();
        let r = corr(&indicator(&ds.y), &indicator(ds.u_debug.as_ref().unwrap()));
        assert!(r.abs() <= 0.02, "corr {r}");
    }

    #[test]
    fn classification_label_rate() {
        let ds = gen_classification(50_000, &ClassificationScmConfig::default(), true, 2).unwrap();
        // 0.75 * 0.2 + 0.25 * 0.8
        let p2 = mean(&indicator(&ds.y));
        assert!((p2 - 0.35).abs() <= 0.01, "P(Y=2) = {p2}");
        assert_eq!(ds.labels(), vec![1, 2]);
    }

    #[test]
    fn classification_x1_mean_given_class_two() {
        let ds = gen_classification(50_000, &ClassificationScmConfig::default(), true, 3).unwrap();
        let x1: Vec<f64> = (0..ds.len()).filter(|&i| ds.y[i] == 2.0).map(|i| ds.x.get(i, 0)).collect();
        let expected = 1.8 * (2.0 * std_normal_cdf(1.2) - 1.0);
        assert!((expected - 1.386).abs() < 1e-3);
        assert!((mean(&x1) - expected).abs() <= 0.03, "{} vs {expected}", mean(&x1));
    }

    #[test]
    fn classification_moments_within_three_standard_errors() {
        let cfg = ClassificationScmConfig::default();
        let ds = gen_classification(50_000, &cfg, true, 4).unwrap();
        let n = ds.len() as f64;
        let z = ds.z.col_values(0);
        // E[Z] = 1.2 (2 P(Y=2) - 1), Var[Z] = 1 + 1.44 (1 - (2p - 1)^2)
        let p2 = 0.35;
        let ez = 1.2 * (2.0 * p2 - 1.0);
        let vz = 1.0 + 1.44 * (1.0 - (2.0 * p2 - 1.0f64).powi(2));
        assert!((mean(&z) - ez).abs() <= 3.0 * (vz / n).sqrt());
        // E[X2] = 2.4 (2 P(U=2) - 1), Var[X2] = 1 + 5.76 (1 - (2 p_u - 1)^2)
        let x2 = ds.x.col_values(1);
        let ex2 = 2.4 * (2.0 * cfg.p_u - 1.0);
        let vx2 = 1.0 + 5.76 * (1.0 - (2.0 * cfg.p_u - 1.0f64).powi(2));
        assert!((mean(&x2) - ex2).abs() <= 3.0 * (vx2 / n).sqrt());
        let sample_var = x2.iter().map(|v| (v - mean(&x2)).powi(2)).sum::<f64>() / (n - 1.0);
        // var of the sample variance ~ (mu4 - sigma^4) / n; bound loosely with 2 sigma^4
        assert!((sample_var - vx2).abs() <= 3.0 * (2.0 * vx2 * vx2 / n).sqrt() * 1.5);
    }

    #[test]
    fn regression_slopes_follow_covariance_algebra() {
        let conf = gen_regression(50_000, &RegressionScmConfig::confounded(), 5).unwrap();
        let s = ols_slope(&conf.x.col_values(0), &conf.y);
        assert!((s - 8.0 / 46.5).abs() <= 0.01, "confounded slope {s}");

        let plain = gen_regression(50_000, &RegressionScmConfig::non_confounded(), 6).unwrap();
        let s = ols_slope(&plain.x.col_values(0), &plain.y);
        assert!((s - 3.0 / 6.5).abs() <= 0.01, "non-confounded slope {s}");
        let r = corr(&plain.x.col_values(0), plain.u_debug.as_ref().unwrap());
        // U still drives Y and hence X through Z; the cut edge is U -> X, so
        // check the partial effect: X - 1.5 Y is independent of U
        let resid: Vec<f64> = (0..plain.len()).map(|i| plain.x.get(i, 0) - 1.5 * plain.y[i]).collect();
        let r_resid = corr(&resid, plain.u_debug.as_ref().unwrap());
        assert!(r_resid.abs() <= 0.02, "corr(X - bY, U) = {r_resid} (raw corr {r})");
    }

    #[test]
    fn regression_moments() {
        let ds = gen_regression(50_000, &RegressionScmConfig::confounded(), 7).unwrap();
        let n = ds.len() as f64;
        let z = ds.z.col_values(0);
        let x = ds.x.col_values(0);
        // E[Z] = 3, Var Z = 2.25 * 2 + 1; E[X] = 3, Var X = 46.5
        assert!((mean(&z) - 3.0).abs() <= 3.0 * (5.5 / n).sqrt());
        assert!((mean(&x) - 3.0).abs() <= 3.0 * (46.5 / n).sqrt());
    }

    #[test]
    fn generators_are_seed_deterministic() {
        let a = gen_classification(300, &ClassificationScmConfig::default(), true, 9).unwrap();
        let b = gen_classification(300, &ClassificationScmConfig::default(), true, 9).unwrap();
        assert_eq!(a, b);
        let c = gen_regression(300, &RegressionScmConfig::default(), 9).unwrap();
        let d = gen_regression(300, &RegressionScmConfig::default(), 9).unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn input_guards() {
        assert!(gen_classification(0, &ClassificationScmConfig::default(), true, 0).is_err());
        assert!(gen_regression(1, &RegressionScmConfig::default(), 0).is_err());
        let bad = ClassificationScmConfig {
            p_u: 1.5,
            ..Default::default()
        };
        assert!(gen_classification(10, &bad, true, 0).is_err());
    }

    #[test]
    fn oracle_table_values() {
        let cfg = ClassificationScmConfig::default();
        assert!((std_normal_cdf(1.2) - 0.884_93).abs() < 1e-5);
        for features in [OracleFeatures::X1Sign, OracleFeatures::X1X2Signs] {
            let t = discretize_for_oracle(&cfg, true, features).unwrap();
            assert!((t.p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            // P(Z > 0 | Y = 2)
            let yi = 1;
            let pz = t.p_yz(yi, 1) / t.p_y(yi);
            assert!((pz - std_normal_cdf(1.2)).abs() < 1e-12);
        }
    }

    #[test]
    fn oracle_table_without_confounding_is_observational() {
        let cfg = ClassificationScmConfig::default();
        let t = discretize_for_oracle(&cfg, false, OracleFeatures::X1X2Signs).unwrap();
        for y in [1, 2] {
            let a = crate::oracle::oracle_frontdoor_distribution(&t, y).unwrap();
            let b = t.conditional_x_given_y(y).unwrap();
            assert!(crate::oracle::total_variation(&a, &b) < 1e-12);
        }
    }

    #[test]
    fn mnist_confounding_curves() {
        let cfg = BackgroundMnistConfig::default();
        assert_eq!(cfg.brightness(0.0), 50.0);
        assert!((cfg.q_y(1.0) - 0.8).abs() < 1e-12);
        let plain = BackgroundMnistConfig::non_confounded();
        for u in [-7.0, -0.3, 0.0, 2.5, 11.0] {
            assert_eq!(plain.q_y(u), 0.5);
            // direct formula
            let direct = cfg.q.powf(u) / (cfg.q.powf(u) + (1.0 - cfg.q).powf(u));
            assert!((cfg.q_y(u) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn brighten_clamps() {
        assert_eq!(brighten(250, 100.0), 1.0);
        assert_eq!(brighten(3, -20.0), 0.0);
        assert_eq!(brighten(51, 0.0), 0.2);
    }
}
