//! Conditional density estimation of the mechanism given the cause, `p(z | y)`.
//!
//! Three estimators cover the variable-kind combinations:
//!
//! | mechanism  | cause      | estimator                                    |
//! |------------|------------|----------------------------------------------|
//! | discrete   | discrete   | frequency table with additive smoothing      |
//! | continuous | discrete   | one Gaussian product-kernel KDE per label    |
//! | continuous | continuous | joint KDE over `(z, y)` divided by KDE of `y` |
//!
//! Discrete variables use the Kronecker delta kernel, so the frequency table is
//! exactly the kernel estimate in that case. Fitted models are immutable.


use serde::{Deserialize, Serialize};

use crate::data::{Matrix, VarKind};
use crate::error::{Error, Result};

/// Smallest density used in a weight denominator.
pub const DENSITY_FLOOR: f64 = 1e-300;

/// Bandwidth returned when the sample spread is (numerically) zero.
pub const BANDWIDTH_FLOOR: f64 = 1e-3;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    KroneckerDelta,
    Gaussian { bandwidth: Vec<f64> },
}

impl KernelSpec {
    pub fn gaussian(bandwidth: Vec<f64>) -> Result<Self> {
        check_bandwidth(&bandwidth)?;
        Ok(KernelSpec::Gaussian { bandwidth })
    }
}

fn check_bandwidth(bandwidth: &[f64]) -> Result<()> {
    if bandwidth.is_empty() || bandwidth.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
        return Err(Error::InvalidInput(format!(
            "gaussian bandwidths must be positive and finite, got {bandwidth:?}"
        )));
    }
    Ok(())
}

/// Silverman's rule of thumb `1.06 * sd * n^(-1/5)`, floored at [`BANDWIDTH_FLOOR`]
/// when the sample standard deviation is below `1e-9`.
pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "bandwidth needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("bandwidth samples must be finite".into()));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    if sd < 1e-9 {
        return Ok(BANDWIDTH_FLOOR);
    }
    Ok(1.06 * sd * n.powf(-0.2))
}

/// Log of the Gaussian product kernel `prod_d N(x_d - c_d; 0, h_d^2)`.
fn log_gaussian_kernel(x: &[f64], center: &[f64], bandwidth: &[f64]) -> f64 {
    let mut acc = 0.0;
    for ((&xi, &ci), &h) in x.iter().zip(center).zip(bandwidth) {
        let t = (xi - ci) / h;
        acc -= 0.5 * t * t + h.ln() + LN_SQRT_2PI;
    }
    acc
}

fn gaussian_kernel(x: &[f64], center: &[f64], bandwidth: &[f64]) -> f64 {
    log_gaussian_kernel(x, center, bandwidth).exp()
}

/// Empirical `p(z | y)` over discrete mechanism values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyTable {
    pub alpha: f64,
    /// Sorted distinct mechanism vectors.
    pub z_values: Vec<Vec<i64>>,
    /// Sorted distinct labels.
    pub labels: Vec<i64>,
    /// `probs[label_index][z_index]`.
    pub probs: Vec<Vec<f64>>,
}

impl FrequencyTable {
    fn fit(z: &Matrix, y: &[f64], labels: &[i64], alpha: f64) -> Result<Self> {
        let keys: Vec<Vec<i64>> = z.iter_rows().map(to_key).collect();
        let mut z_values = keys.clone();
        z_values.sort();
        z_values.dedup();
        let k = z_values.len() as f64;

        let mut counts = vec![vec![0.0; z_values.len()]; labels.len()];
        for (key, &yn) in keys.iter().zip(y) {
            let li = labels.binary_search(&(yn as i64)).expect("label set covers data");
            let zi = z_values.binary_search(key).expect("value set covers data");
            counts[li][zi] += 1.0;
        }
        let mut probs = Vec::with_capacity(labels.len());
        for (row, &label) in counts.iter().zip(labels) {
            let total: f64 = row.iter().sum();
            if total == 0.0 && alpha == 0.0 {
                return Err(Error::DegenerateClass(label));
            }
            probs.push(row.iter().map(|c| (c + alpha) / (total + alpha * k)).collect());
        }
        Ok(FrequencyTable {
            alpha,
            z_values,
            labels: labels.to_vec(),
            probs,
        })
    }

    fn eval(&self, z: &[f64], y: f64) -> Result<f64> {
        let label = y as i64;
        let key = to_key(z);
        let zi = self.z_values.binary_search(&key);
        match self.labels.binary_search(&label) {
            Ok(li) => Ok(zi.map_or(0.0, |zi| self.probs[li][zi])),
            // smoothing puts uniform mass on labels never seen in the fit
            Err(_) if self.alpha > 0.0 => Ok(zi.map_or(0.0, |_| 1.0 / self.z_values.len() as f64)),
            Err(_) => Err(Error::UnknownLabel(label)),
        }
    }
}

fn to_key(row: &[f64]) -> Vec<i64> {
    row.iter().map(|&v| v as i64).collect()
}

/// Gaussian KDE bank for one label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassKde {
    pub label: i64,
    pub samples: Matrix,
    pub bandwidth: Vec<f64>,
}

impl ClassKde {
    fn eval(&self, z: &[f64]) -> f64 {
        let n = self.samples.rows() as f64;
        self.samples
            .iter_rows()
            .map(|c| gaussian_kernel(z, c, &self.bandwidth))
            .sum::<f64>()
            / n
    }
}

/// Continuous mechanism, discrete cause: one KDE per label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerClassKde {
    pub dz: usize,
    /// Sorted by label.
    pub classes: Vec<ClassKde>,
}

impl PerClassKde {
    fn fit(z: &Matrix, y: &[f64], labels: &[i64], bandwidth: Option<&[f64]>) -> Result<Self> {
        let members: Vec<Vec<usize>> = labels
            .iter()
            .map(|&label| (0..y.len()).filter(|&i| y[i] as i64 == label).collect())
            .collect();
        if let Some(i) = members.iter().position(Vec::is_empty) {
            return Err(Error::DegenerateClass(labels[i]));
        }
        let mut classes = Vec::with_capacity(labels.len());
        for (&label, rows) in labels.iter().zip(&members) {
            let samples = z.select_rows(rows);
            let bandwidth = match bandwidth {
                Some(h) => h.to_vec(),
                None => (0..z.cols())
                    .map(|j| silverman_bandwidth(&samples.col_values(j)))
                    .collect::<Result<Vec<_>>>()?,
            };
            classes.push(ClassKde {
                label,
                samples,
                bandwidth,
            });
        }
        Ok(PerClassKde {
            dz: z.cols(),
            classes,
        })
    }

    pub fn class(&self, label: i64) -> Result<&ClassKde> {
        self.classes
            .binary_search_by_key(&label, |c| c.label)
            .map(|i| &self.classes[i])
            .map_err(|_| Error::UnknownLabel(label))
    }
}

/// Continuous mechanism and cause: `p(z, y) / p(y)` from product-kernel KDEs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointRatioKde {
    pub z: Matrix,
    pub y: Vec<f64>,
    pub z_bandwidth: Vec<f64>,
    pub y_bandwidth: f64,
}

impl JointRatioKde {
    fn fit(z: &Matrix, y: &[f64], bandwidth: Option<&[f64]>) -> Result<Self> {
        let (z_bandwidth, y_bandwidth) = match bandwidth {
            Some(h) => {
                if h.len() != z.cols() + 1 {
                    return Err(Error::InvalidInput(format!(
                        "joint KDE needs {} bandwidths (mechanism dims + cause), got {}",
                        z.cols() + 1,
                        h.len()
                    )));
                }
                (h[..z.cols()].to_vec(), h[z.cols()])
            }
            None => (
                (0..z.cols())
                    .map(|j| silverman_bandwidth(&z.col_values(j)))
                    .collect::<Result<Vec<_>>>()?,
                silverman_bandwidth(y)?,
            ),
        };
        Ok(JointRatioKde {
            z: z.clone(),
            y: y.to_vec(),
            z_bandwidth,
            y_bandwidth,
        })
    }

    /// Normalized mixing weights `K(y - y_j) / sum_k K(y - y_k)` over the fit samples.
    ///
    /// Computed in log space, so the weights stay well defined far from the data.
    pub fn cause_weights(&self, y: f64) -> Vec<f64> {
        let inv_h = 1.0 / self.y_bandwidth;
        let mut w: Vec<f64> = self
            .y
            .iter()
            .map(|&yj| {
                let t = (y - yj) * inv_h;
                -0.5 * t * t
            })
            .collect();
        let max = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        w.iter_mut().for_each(|l| *l = (*l - max).exp());
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
        w
    }

    /// Mechanism kernel between a query point and fit sample `j`.
    pub fn mechanism_kernel(&self, z: &[f64], j: usize) -> f64 {
        gaussian_kernel(z, self.z.row(j), &self.z_bandwidth)
    }

    /// Same values as [`Self::mechanism_kernel`], with the bandwidth terms hoisted
    /// out for tight loops.
    pub fn mechanism_kernel_fn(&self) -> impl Fn(&[f64], usize) -> f64 + '_ {
        let inv_h: Vec<f64> = self.z_bandwidth.iter().map(|h| 1.0 / h).collect();
        let log_norm: f64 = -self.z_bandwidth.iter().map(|h| h.ln() + LN_SQRT_2PI).sum::<f64>();
        move |z, j| {
            let mut q = 0.0;
            for ((&zi, &ci), &ih) in z.iter().zip(self.z.row(j)).zip(&inv_h) {
                let t = (zi - ci) * ih;
                q += t * t;
            }
            (log_norm - 0.5 * q).exp()
        }
    }

    fn eval(&self, z: &[f64], y: f64) -> f64 {
        let k = self.mechanism_kernel_fn();
        self.cause_weights(y)
            .iter()
            .enumerate()
            .filter(|(_, &a)| a > 0.0)
            .map(|(j, &a)| a * k(z, j))
            .sum()
    }
}

/// A fitted estimator of `p(z | y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum ConditionalDensity {
    FrequencyTable(FrequencyTable),
    PerClassKde(PerClassKde),
    JointRatioKde(JointRatioKde),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitOptions {
    /// Additive smoothing for frequency tables.
    pub alpha: f64,
    /// Label set to fit; defaults to the labels present in the data.
    pub labels: Option<Vec<i64>>,
    /// Fixed Gaussian bandwidths instead of Silverman's rule. For the joint
    /// estimator the last entry is the cause bandwidth.
    pub bandwidth: Option<Vec<f64>>,
}

/// Fits the estimator matching the declared kinds of mechanism and cause.
pub fn fit_conditional(
    z: &Matrix,
    y: &[f64],
    z_kind: VarKind,
    y_kind: VarKind,
    opts: &FitOptions,
) -> Result<ConditionalDensity> {
    if z.rows() != y.len() {
        return Err(Error::LengthMismatch(format!(
            "mechanism has {} rows, cause has {}",
            z.rows(),
            y.len()
        )));
    }
    if y.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "conditional density needs at least 2 samples, got {}",
            y.len()
        )));
    }
    if z.cols() == 0 {
        return Err(Error::InvalidInput("mechanism has no columns".into()));
    }
    if z.as_slice().iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite mechanism or cause value".into()));
    }
    if !(opts.alpha >= 0.0 && opts.alpha.is_finite()) {
        return Err(Error::InvalidInput(format!("smoothing alpha must be >= 0, got {}", opts.alpha)));
    }
    if let Some(h) = &opts.bandwidth {
        check_bandwidth(h)?;
    }
    let integral = |v: &[f64]| v.iter().all(|x| x.fract() == 0.0);
    if z_kind == VarKind::Discrete && !integral(z.as_slice()) {
        return Err(Error::KindMismatch(
            "mechanism declared discrete but holds non-integer (continuous) values".into(),
        ));
    }
    if y_kind == VarKind::Discrete && !integral(y) {
        return Err(Error::KindMismatch(
            "cause declared discrete but holds non-integer (continuous) values".into(),
        ));
    }

    let labels = || -> Result<Vec<i64>> {
        let mut present: Vec<i64> = y.iter().map(|&v| v as i64).collect();
        present.sort_unstable();
        present.dedup();
        match &opts.labels {
            None => Ok(present),
            Some(given) => {
                let mut given = given.clone();
                given.sort_unstable();
                given.dedup();
                if let Some(missing) = present.iter().find(|l| given.binary_search(l).is_err()) {
                    return Err(Error::UnknownLabel(*missing));
                }
                Ok(given)
            }
        }
    };

    match (z_kind, y_kind) {
        (VarKind::Discrete, VarKind::Discrete) => Ok(ConditionalDensity::FrequencyTable(
            FrequencyTable::fit(z, y, &labels()?, opts.alpha)?,
        )),
        (VarKind::Continuous, VarKind::Discrete) => {
            if let Some(h) = &opts.bandwidth {
                if h.len() != z.cols() {
                    return Err(Error::InvalidInput(format!(
                        "per-class KDE needs {} bandwidths, got {}",
                        z.cols(),
                        h.len()
                    )));
                }
            }
            Ok(ConditionalDensity::PerClassKde(PerClassKde::fit(
                z,
                y,
                &labels()?,
                opts.bandwidth.as_deref(),
            )?))
        }
        (VarKind::Continuous, VarKind::Continuous) => Ok(ConditionalDensity::JointRatioKde(
            JointRatioKde::fit(z, y, opts.bandwidth.as_deref())?,
        )),
        (VarKind::Discrete, VarKind::Continuous) => Err(Error::KindMismatch(
            "a discrete mechanism with a continuous cause has no estimator".into(),
        )),
    }
}

impl ConditionalDensity {
    /// Density (continuous mechanism) or probability mass (discrete mechanism)
    /// of `z` given `y`.
    pub fn eval(&self, z: &[f64], y: f64) -> Result<f64> {
        if z.len() != self.dz() {
            return Err(Error::LengthMismatch(format!(
                "mechanism point has {} dims, model has {}",
                z.len(),
                self.dz()
            )));
        }
        match self {
            ConditionalDensity::FrequencyTable(t) => t.eval(z, y),
            ConditionalDensity::PerClassKde(m) => Ok(m.class(y as i64)?.eval(z)),
            ConditionalDensity::JointRatioKde(m) => Ok(m.eval(z, y)),
        }
    }

    pub fn dz(&self) -> usize {
        match self {
            ConditionalDensity::FrequencyTable(t) => t.z_values.first().map_or(0, Vec::len),
            ConditionalDensity::PerClassKde(m) => m.dz,
            ConditionalDensity::JointRatioKde(m) => m.z.cols(),
        }
    }

    pub fn y_kind(&self) -> VarKind {
        match self {
            ConditionalDensity::JointRatioKde(_) => VarKind::Continuous,
            _ => VarKind::Discrete,
        }
    }

    pub fn variant_name(&self) -> &'static str {
        match self {
            ConditionalDensity::FrequencyTable(_) => "frequency_table",
            ConditionalDensity::PerClassKde(_) => "per_class_kde",
            ConditionalDensity::JointRatioKde(_) => "joint_ratio_kde",
        }
    }

    /// Kernels used for the mechanism and the cause.
    pub fn kernels(&self) -> (KernelSpec, KernelSpec) {
        match self {
            ConditionalDensity::FrequencyTable(_) => (KernelSpec::KroneckerDelta, KernelSpec::KroneckerDelta),
            ConditionalDensity::PerClassKde(m) => (
                KernelSpec::Gaussian {
                    bandwidth: m.classes.first().map(|c| c.bandwidth.clone()).unwrap_or_default(),
                },
                KernelSpec::KroneckerDelta,
            ),
            ConditionalDensity::JointRatioKde(m) => (
                KernelSpec::Gaussian {
                    bandwidth: m.z_bandwidth.clone(),
                },
                KernelSpec::Gaussian {
                    bandwidth: vec![m.y_bandwidth],
                },
            ),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng as _;
    use rand_distr::StandardNormal;

    fn col(v: &[f64]) -> Matrix {
        Matrix::column(v.to_vec())
    }

    #[test]
    fn silverman_zero_variance_floor() {
        assert_eq!(silverman_bandwidth(&[3.3; 20]).unwrap(), BANDWIDTH_FLOOR);
    }

    #[test]
    fn silverman_shift_invariant() {
        let mut rng = crate::rng::stream(11);
        let s: Vec<f64> = (0..300).map(|_| rng.sample(StandardNormal)).collect();
        let shifted: Vec<f64> = s.iter().map(|v| v + 7.0).collect();
        let a = silverman_bandwidth(&s).unwrap();
        let b = silverman_bandwidth(&shifted).unwrap();
        assert!((a - b).abs() < 1e-12 * a);
    }

    #[test]
    fn silverman_matches_formula_on_seeded_normals() {
        let mut rng = crate::rng::stream(2024);
        let s: Vec<f64> = (0..1000).map(|_| rng.sample(StandardNormal)).collect();
        // two-pass reference, independent of the implementation's loop
        let n = s.len() as f64;
        let mean = s.iter().sum::<f64>() / n;
        let sd = (s.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt();
        let expected = 1.06 * sd * 1000f64.powf(-0.2);
        assert!((silverman_bandwidth(&s).unwrap() - expected).abs() < 1e-14);
        assert!((0.9..1.1).contains(&sd), "seeded sample sd {sd}");
    }

    #[test]
    fn silverman_errors() {
        assert!(matches!(silverman_bandwidth(&[1.0]), Err(Error::InvalidInput(_))));
        assert!(matches!(silverman_bandwidth(&[1.0, f64::INFINITY]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn kernel_spec_rejects_non_positive_bandwidth() {
        assert!(KernelSpec::gaussian(vec![0.5, 0.0]).is_err());
        assert!(KernelSpec::gaussian(vec![]).is_err());
        assert!(KernelSpec::gaussian(vec![0.5]).is_ok());
    }

    #[test]
    fn frequency_table_deterministic_mechanism() {
        let m = fit_conditional(
            &col(&[0.0, 0.0, 1.0, 1.0]),
            &[1.0, 1.0, 2.0, 2.0],
            VarKind::Discrete,
            VarKind::Discrete,
            &FitOptions::default(),
        )
        .unwrap();
        assert_eq!(m.eval(&[0.0], 1.0).unwrap(), 1.0);
        assert_eq!(m.eval(&[1.0], 1.0).unwrap(), 0.0);
        assert_eq!(m.eval(&[1.0], 2.0).unwrap(), 1.0);
    }

    #[test]
    fn frequency_table_independent_mechanism() {
        let m = fit_conditional(
            &col(&[0.0, 1.0, 0.0, 1.0]),
            &[1.0, 1.0, 2.0, 2.0],
            VarKind::Discrete,
            VarKind::Discrete,
            &FitOptions::default(),
        )
        .unwrap();
        for z in [0.0, 1.0] {
            assert_eq!(m.eval(&[z], 1.0).unwrap(), m.eval(&[z], 2.0).unwrap());
            assert_eq!(m.eval(&[z], 1.0).unwrap(), 0.5);
        }
    }

    #[test]
    fn frequency_table_unknown_label() {
        let z = col(&[0.0, 1.0]);
        let y = [1.0, 2.0];
        let m = fit_conditional(&z, &y, VarKind::Discrete, VarKind::Discrete, &FitOptions::default()).unwrap();
        assert!(matches!(m.eval(&[0.0], 3.0), Err(Error::UnknownLabel(3))));

        let smoothed = fit_conditional(
            &z,
            &y,
            VarKind::Discrete,
            VarKind::Discrete,
            &FitOptions {
                alpha: 1.0,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(smoothed.eval(&[0.0], 3.0).unwrap(), 0.5);
        // (1 + 1) / (1 + 2)
        assert!((smoothed.eval(&[0.0], 1.0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_class_is_named() {
        let opts = FitOptions {
            labels: Some(vec![1, 2, 3]),
            ..Default::default()
        };
        let err = fit_conditional(&col(&[0.1, 0.2, 0.3]), &[1.0, 1.0, 2.0], VarKind::Continuous, VarKind::Discrete, &opts)
            .unwrap_err();
        assert!(matches!(err, Error::DegenerateClass(3)), "{err:?}");
        let err = fit_conditional(&col(&[0.0, 1.0, 1.0]), &[1.0, 1.0, 2.0], VarKind::Discrete, VarKind::Discrete, &opts)
            .unwrap_err();
        assert!(matches!(err, Error::DegenerateClass(3)), "{err:?}");
    }

    #[test]
    fn kind_mismatch() {
        let err = fit_conditional(
            &col(&[0.25, 1.0]),
            &[1.0, 2.0],
            VarKind::Discrete,
            VarKind::Discrete,
            &FitOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::KindMismatch(_)));
        let err = fit_conditional(
            &col(&[0.0, 1.0]),
            &[1.0, 2.0],
            VarKind::Discrete,
            VarKind::Continuous,
            &FitOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::KindMismatch(_)));
    }

    #[test]
    fn per_class_kde_prefers_matching_class_mean() {
        let mut rng = crate::rng::stream(5);
        let mut z = Vec::new();
        let mut y = Vec::new();
        for i in 0..2000 {
            let label = if i % 2 == 0 { 1.0 } else { 2.0 };
            let mu = if label == 1.0 { -1.2 } else { 1.2 };
            z.push(mu + rng.sample::<f64, _>(StandardNormal));
            y.push(label);
        }
        let m = fit_conditional(&col(&z), &y, VarKind::Continuous, VarKind::Discrete, &FitOptions::default()).unwrap();
        assert!(m.eval(&[1.2], 2.0).unwrap() > m.eval(&[1.2], 1.0).unwrap());
        assert!(m.eval(&[-1.2], 1.0).unwrap() > m.eval(&[-1.2], 2.0).unwrap());
    }

    #[test]
    fn single_sample_kernel_peak() {
        let h = 0.4;
        for dz in 1..=3 {
            let z = Matrix::new(2, dz, (0..2 * dz).map(|i| i as f64 * 0.3).collect()).unwrap();
            let m = fit_conditional(
                &z,
                &[1.0, 2.0],
                VarKind::Continuous,
                VarKind::Discrete,
                &FitOptions {
                    bandwidth: Some(vec![h; dz]),
                    ..Default::default()
                },
            )
            .unwrap();
            let expected = (2.0 * std::f64::consts::PI).powf(-(dz as f64) / 2.0) * h.powi(-(dz as i32));
            let got = m.eval(z.row(0), 1.0).unwrap();
            assert!((got - expected).abs() < 1e-12 * expected, "dz={dz}: {got} vs {expected}");
        }
    }

    #[test]
    fn per_class_kde_integrates_to_one() {
        let mut rng = crate::rng::stream(8);
        let z: Vec<f64> = (0..200).map(|_| 0.5 + rng.sample::<f64, _>(StandardNormal)).collect();
        let y = vec![1.0; z.len()];
        let m = fit_conditional(&col(&z), &y, VarKind::Continuous, VarKind::Discrete, &FitOptions::default()).unwrap();
        let ConditionalDensity::PerClassKde(kde) = &m else { unreachable!() };
        let h = kde.classes[0].bandwidth[0];
        let lo = z.iter().copied().fold(f64::INFINITY, f64::min) - 10.0 * h;
        let hi = z.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 10.0 * h;
        let steps = 20_000;
        let dx = (hi - lo) / steps as f64;
        let integral: f64 = (0..steps)
            .map(|i| m.eval(&[lo + (i as f64 + 0.5) * dx], 1.0).unwrap() * dx)
            .sum();
        assert!((integral - 1.0).abs() < 1e-3, "integral {integral}");
    }

    #[test]
    fn joint_ratio_tracks_linear_mechanism() {
        let mut rng = crate::rng::stream(3);
        let y: Vec<f64> = (0..1500).map(|_| rng.sample::<f64, _>(StandardNormal) * 2.0).collect();
        let z: Vec<f64> = y.iter().map(|v| 1.5 * v + rng.sample::<f64, _>(StandardNormal)).collect();
        let m = fit_conditional(&col(&z), &y, VarKind::Continuous, VarKind::Continuous, &FitOptions::default()).unwrap();
        assert!(m.eval(&[3.0], 2.0).unwrap() > m.eval(&[3.0], -2.0).unwrap());
        // far outside the data the estimate stays finite and positive
        let far = m.eval(&[30.0], 20.0).unwrap();
        assert!(far.is_finite() && far >= 0.0);
    }

    #[test]
    fn json_round_trip() {
        let m = fit_conditional(
            &col(&[0.1, 0.4, -0.2, 1.5]),
            &[1.0, 1.0, 2.0, 2.0],
            VarKind::Continuous,
            VarKind::Discrete,
            &FitOptions::default(),
        )
        .unwrap();
        let back = ConditionalDensity::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(m, back);
        assert!(m.to_json().unwrap().contains("\"variant\": \"per_class_kde\""));
    }

    #[test]
    fn fitting_is_deterministic() {
        let z = col(&[0.3, -1.0, 2.2, 0.7, 1.1]);
        let y = [0.5, 1.5, -0.2, 0.9, 2.0];
        let a = fit_conditional(&z, &y, VarKind::Continuous, VarKind::Continuous, &FitOptions::default()).unwrap();
        let b = fit_conditional(&z, &y, VarKind::Continuous, VarKind::Continuous, &FitOptions::default()).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }

    fn discrete_data() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        proptest::collection::vec((0i64..4, 1i64..4), 2..60).prop_map(|pairs| {
            let (z, y): (Vec<_>, Vec<_>) = pairs.into_iter().map(|(z, y)| (z as f64, y as f64)).unzip();
            (z, y)
        })
    }

    proptest! {
        #[test]
        fn frequency_table_rows_normalize((z, y) in discrete_data(), alpha in 0.0f64..2.0) {
            let m = fit_conditional(&col(&z), &y, VarKind::Discrete, VarKind::Discrete,
                &FitOptions { alpha, ..Default::default() }).unwrap();
            let ConditionalDensity::FrequencyTable(t) = &m else { unreachable!() };
            for &label in &t.labels {
                let total: f64 = t.z_values.iter()
                    .map(|zv| m.eval(&[zv[0] as f64], label as f64).unwrap())
                    .sum();
                prop_assert!((total - 1.0).abs() <= 1e-12);
            }
        }

        #[test]
        fn densities_are_nonnegative(
            z in proptest::collection::vec(-5.0f64..5.0, 4..40),
            q in -20.0f64..20.0,
            yq in -20.0f64..20.0,
        ) {
            let y_disc: Vec<f64> = (0..z.len()).map(|i| (i % 2 + 1) as f64).collect();
            let y_cont: Vec<f64> = z.iter().map(|v| v * 0.5 + 1.0).collect();
            let a = fit_conditional(&col(&z), &y_disc, VarKind::Continuous, VarKind::Discrete, &FitOptions::default()).unwrap();
            let b = fit_conditional(&col(&z), &y_cont, VarKind::Continuous, VarKind::Continuous, &FitOptions::default()).unwrap();
            prop_assert!(a.eval(&[q], 1.0).unwrap() >= 0.0);
            prop_assert!(a.eval(&[q], 2.0).unwrap() >= 0.0);
            let v = b.eval(&[q], yq).unwrap();
            prop_assert!(v >= 0.0 && v.is_finite());
        }

        #[test]
        fn shared_samples_collapse_dependence(z in proptest::collection::vec(-3.0f64..3.0, 2..20), q in -4.0f64..4.0) {
            // identical mechanism samples under both labels
            let zz: Vec<f64> = z.iter().chain(z.iter()).copied().collect();
            let y: Vec<f64> = (0..zz.len()).map(|i| if i < z.len() { 1.0 } else { 2.0 }).collect();
            let m = fit_conditional(&col(&zz), &y, VarKind::Continuous, VarKind::Discrete, &FitOptions::default()).unwrap();
            prop_assert_eq!(m.eval(&[q], 1.0).unwrap(), m.eval(&[q], 2.0).unwrap());
        }
    }
}
