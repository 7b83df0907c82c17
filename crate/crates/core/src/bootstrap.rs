//! Front-door causal bootstrap.
//!
//! For an intervention value `y_hat`, sample `n` of the observational data gets
//! weight
//!
//! ```text
//! w_n = p(z_n | y_hat) / (N * p(z_n | y_n))
//! ```
//!
//! and resampling rows `x_n` with these weights yields draws from `p(x | do(y_hat))`.
//! Weights are normalized per intervention value before sampling; the
//! unnormalized sum is kept as a diagnostic.

use std::collections::hash_map::Entry;
use std::collections::{BTreeMap, HashMap};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{Matrix, ObservationalDataset, VarKind};
use crate::density::{ConditionalDensity, JointRatioKde, DENSITY_FLOOR};
use crate::error::{Error, Result};
use crate::rng;

/// Stream index reserved for the intervention sequence; draw `m` uses stream `m`.
const SEQUENCE_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyKind {
    /// `y_hat` follows the observational cause (a seeded permutation of `Y`).
    MatchObservational,
    /// Labels i.i.d. uniform over the observed label set.
    UniformLabels,
    /// Values i.i.d. uniform on `[lo, hi]`.
    UniformContinuous { lo: f64, hi: f64 },
    Explicit { values: Vec<f64> },
    /// Exactly `targets[label]` interventions per label, shuffled.
    ClassBalanced { targets: BTreeMap<i64, usize> },
}

/// How intervention values `y_hat_1..y_hat_M` are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionPolicy {
    #[serde(flatten)]
    pub kind: PolicyKind,
    /// Bootstrap size `M`; `None` means the natural size (N, or the length
    /// implied by explicit and class-balanced policies).
    pub size: Option<usize>,
}

impl InterventionPolicy {
    pub fn new(kind: PolicyKind, size: Option<usize>) -> Result<Self> {
        let p = InterventionPolicy { kind, size };
        p.check()?;
        Ok(p)
    }

    pub fn match_observational() -> Self {
        InterventionPolicy {
            kind: PolicyKind::MatchObservational,
            size: None,
        }
    }

    fn check(&self) -> Result<()> {
        if self.size == Some(0) {
            return Err(Error::InvalidInput("bootstrap size M must be positive".into()));
        }
        match &self.kind {
            PolicyKind::UniformContinuous { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(Error::InvalidInput(format!(
                        "uniform intervention range needs lo < hi, got [{lo}, {hi}]"
                    )));
                }
            }
            PolicyKind::Explicit { values } => {
                if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidInput("explicit interventions must be finite and non-empty".into()));
                }
                if let Some(m) = self.size {
                    if m != values.len() {
                        return Err(Error::InvalidInput(format!(
                            "explicit sequence has length {}, M = {m}",
                            values.len()
                        )));
                    }
                }
            }
            PolicyKind::ClassBalanced { targets } => {
                let total: usize = targets.values().sum();
                if total == 0 {
                    return Err(Error::InvalidInput("class-balanced targets are all zero".into()));
                }
                if let Some(m) = self.size {
                    if m != total {
                        return Err(Error::InvalidInput(format!(
                            "class-balanced targets sum to {total}, M = {m}"
                        )));
                    }
                }
            }
            PolicyKind::MatchObservational | PolicyKind::UniformLabels => {}
        }
        Ok(())
    }

    /// Bootstrap size `M` for a dataset of `n` rows.
    pub fn bootstrap_size(&self, n: usize) -> usize {
        match (&self.kind, self.size) {
            (PolicyKind::Explicit { values }, _) => values.len(),
            (PolicyKind::ClassBalanced { targets }, _) => targets.values().sum(),
            (_, Some(m)) => m,
            (_, None) => n,
        }
    }
}

/// Builds the intervention sequence `y_hat_1..y_hat_M` for a policy.
pub fn intervention_sequence(policy: &InterventionPolicy, ds: &ObservationalDataset, seed: u64) -> Result<Vec<f64>> {
    policy.check()?;
    let m = policy.bootstrap_size(ds.len());
    let mut rng = rng::substream(seed, SEQUENCE_STREAM);
    let discrete_only = |what: &str| -> Result<()> {
        if ds.y_kind != VarKind::Discrete {
            return Err(Error::KindMismatch(format!("{what} policy needs a discrete cause")));
        }
        Ok(())
    };
    match &policy.kind {
        PolicyKind::MatchObservational => {
            let mut order: Vec<usize> = (0..ds.len()).collect();
            order.shuffle(&mut rng);
            Ok((0..m).map(|i| ds.y[order[i % order.len()]]).collect())
        }
        PolicyKind::UniformLabels => {
            discrete_only("uniform-labels")?;
            let labels = ds.labels();
            Ok((0..m)
                .map(|_| labels[rng.random_range(0..labels.len())] as f64)
                .collect())
        }
        PolicyKind::UniformContinuous { lo, hi } => Ok((0..m).map(|_| rng.random_range(*lo..=*hi)).collect()),
        PolicyKind::Explicit { values } => Ok(values.clone()),
        PolicyKind::ClassBalanced { targets } => {
            discrete_only("class-balanced")?;
            let labels = ds.labels();
            let mut seq = Vec::with_capacity(m);
            for (&label, &count) in targets {
                if labels.binary_search(&label).is_err() {
                    return Err(Error::UnknownLabel(label));
                }
                seq.extend(std::iter::repeat_n(label as f64, count));
            }
            seq.shuffle(&mut rng);
            Ok(seq)
        }
    }
}

/// Resampling weights for one intervention value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub y_hat: f64,
    /// Normalized weights, one per observational sample.
    pub w: Vec<f64>,
    /// Sum of the unnormalized weights.
    pub raw_sum: f64,
    /// Number of samples whose denominator `p(z_n | y_n)` was floored.
    pub underflow_count: usize,
}

/// Per-intervention diagnostic record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionDiagnostics {
    pub y_hat: f64,
    pub raw_sum: f64,
    /// Number of resampled rows carrying this intervention.
    pub draws: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResampleDiagnostics {
    pub seed: u64,
    pub policy: InterventionPolicy,
    pub estimator: String,
    pub n: usize,
    pub m: usize,
    pub underflow_count: usize,
    pub mean_raw_sum: f64,
    pub interventions: Vec<InterventionDiagnostics>,
}

/// `M` resampled pairs `(x_m, y_hat_m)` approximating draws from `p(x | do(y))`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeconfoundedDataset {
    pub x: Matrix,
    pub y_hat: Vec<f64>,
    /// Mechanism of the source row, carried along for the shared CSV schema.
    pub z: Matrix,
    /// Source row index of each resampled row.
    pub provenance: Vec<usize>,
    pub y_kind: VarKind,
    pub z_kind: VarKind,
    pub seed: u64,
    pub diagnostics: ResampleDiagnostics,
}

impl DeconfoundedDataset {
    /// View as an ordinary dataset (for training), dropping provenance.
    pub fn to_observational(&self) -> ObservationalDataset {
        ObservationalDataset {
            x: self.x.clone(),
            y: self.y_hat.clone(),
            z: self.z.clone(),
            y_kind: self.y_kind,
            z_kind: self.z_kind,
            u_debug: None,
        }
    }
}

fn cache_key(y: f64, kind: VarKind) -> i64 {
    match kind {
        VarKind::Discrete => y as i64,
        VarKind::Continuous => (y * 1e9).round() as i64,
    }
}

/// A dataset paired with a fitted `p(z | y)`, with the weight denominators
/// `p(z_n | y_n)` evaluated once.
#[derive(Debug)]
pub struct FrontDoorBootstrap<'a> {
    ds: &'a ObservationalDataset,
    cond: &'a ConditionalDensity,
    /// Floored `p(z_n | y_n)`.
    denominators: Vec<f64>,
    underflow_count: usize,
    /// For the joint KDE: `c_j = sum_n K_z(z_n - z_j) / den_n`.
    column_mass: Option<Vec<f64>>,
}

impl<'a> FrontDoorBootstrap<'a> {
    pub fn new(ds: &'a ObservationalDataset, cond: &'a ConditionalDensity) -> Result<Self> {
        ds.validate()?;
        if cond.dz() != ds.dz() {
            return Err(Error::InvalidInput(format!(
                "density fitted on {}-dim mechanism, dataset has {}",
                cond.dz(),
                ds.dz()
            )));
        }
        if cond.y_kind() != ds.y_kind {
            return Err(Error::KindMismatch(format!(
                "{} estimator does not match a {:?} cause",
                cond.variant_name(),
                ds.y_kind
            )));
        }
        let mut denominators = Vec::with_capacity(ds.len());
        let mut underflow_count = 0;
        for n in 0..ds.len() {
            let d = cond.eval(ds.z.row(n), ds.y[n])?;
            if d < DENSITY_FLOOR {
                underflow_count += 1;
                denominators.push(DENSITY_FLOOR);
            } else {
                denominators.push(d);
            }
        }
        let column_mass = match cond {
            ConditionalDensity::JointRatioKde(kde) => {
                let k = kde.mechanism_kernel_fn();
                Some(
                    (0..ds.len())
                        .map(|j| (0..ds.len()).map(|n| k(ds.z.row(n), j) / denominators[n]).sum())
                        .collect(),
                )
            }
            _ => None,
        };
        Ok(FrontDoorBootstrap {
            ds,
            cond,
            denominators,
            underflow_count,
            column_mass,
        })
    }

    pub fn underflow_count(&self) -> usize {
        self.underflow_count
    }

    /// Weights for one intervention value.
    pub fn weights(&self, y_hat: f64) -> Result<WeightVector> {
        let n = self.ds.len() as f64;
        let numerators: Vec<f64> = match self.cond {
            ConditionalDensity::JointRatioKde(kde) => {
                let a = kde.cause_weights(y_hat);
                (0..self.ds.len())
                    .map(|i| {
                        let zi = self.ds.z.row(i);
                        a.iter()
                            .enumerate()
                            .filter(|(_, &aj)| aj > 0.0)
                            .map(|(j, &aj)| aj * kde.mechanism_kernel(zi, j))
                            .sum()
                    })
                    .collect()
            }
            _ => (0..self.ds.len())
                .map(|i| self.cond.eval(self.ds.z.row(i), y_hat))
                .collect::<Result<_>>()?,
        };
        let raw: Vec<f64> = numerators
            .iter()
            .zip(&self.denominators)
            .map(|(num, den)| num / (n * den))
            .collect();
        let raw_sum: f64 = raw.iter().sum();
        if !(raw_sum > 0.0 && raw_sum.is_finite()) {
            return Err(Error::EmptySupport { y_hat });
        }
        Ok(WeightVector {
            y_hat,
            w: raw.iter().map(|r| r / raw_sum).collect(),
            raw_sum,
            underflow_count: self.underflow_count,
        })
    }

    /// Runs the weighted resampling for every intervention of the policy.
    ///
    /// Draw `m` uses random substream `m` of `seed`, so the output depends only
    /// on the inputs and the seed.
    pub fn resample(&self, policy: &InterventionPolicy, seed: u64) -> Result<DeconfoundedDataset> {
        let y_hat = intervention_sequence(policy, self.ds, seed)?;
        let (provenance, raw_sums) = match (self.cond, &self.column_mass) {
            (ConditionalDensity::JointRatioKde(kde), Some(mass)) => self.draw_mixture(kde, mass, &y_hat, seed)?,
            _ => self.draw_categorical(&y_hat, seed)?,
        };

        let mut per_value: BTreeMap<i64, InterventionDiagnostics> = BTreeMap::new();
        for &v in &y_hat {
            let key = cache_key(v, self.ds.y_kind);
            per_value
                .entry(key)
                .or_insert_with(|| InterventionDiagnostics {
                    y_hat: v,
                    raw_sum: raw_sums[&key],
                    draws: 0,
                })
                .draws += 1;
        }
        let interventions: Vec<InterventionDiagnostics> = per_value.into_values().collect();
        let mean_raw_sum =
            interventions.iter().map(|d| d.raw_sum * d.draws as f64).sum::<f64>() / y_hat.len() as f64;

        Ok(DeconfoundedDataset {
            x: self.ds.x.select_rows(&provenance),
            z: self.ds.z.select_rows(&provenance),
            y_kind: self.ds.y_kind,
            z_kind: self.ds.z_kind,
            seed,
            diagnostics: ResampleDiagnostics {
                seed,
                policy: policy.clone(),
                estimator: self.cond.variant_name().to_string(),
                n: self.ds.len(),
                m: y_hat.len(),
                underflow_count: self.underflow_count,
                mean_raw_sum,
                interventions,
            },
            y_hat,
            provenance,
        })
    }

    /// Direct categorical draws; one weight vector per distinct intervention.
    fn draw_categorical(&self, y_hat: &[f64], seed: u64) -> Result<(Vec<usize>, HashMap<i64, f64>)> {
        let mut cache: HashMap<i64, WeightedIndex<f64>> = HashMap::new();
        let mut raw_sums = HashMap::new();
        let mut out = Vec::with_capacity(y_hat.len());
        for (m, &v) in y_hat.iter().enumerate() {
            let key = cache_key(v, self.ds.y_kind);
            let dist = match cache.entry(key) {
                Entry::Occupied(e) => e.into_mut(),
                Entry::Vacant(e) => {
                    let at = |e: Error| Error::AtIntervention { m, source: Box::new(e) };
                    let wv = self.weights(v).map_err(at)?;
                    raw_sums.insert(key, wv.raw_sum);
                    e.insert(WeightedIndex::new(&wv.w).map_err(|_| at(Error::EmptySupport { y_hat: v }))?)
                }
            };
            let mut r = rng::substream(seed, m as u64);
            out.push(dist.sample(&mut r));
        }
        Ok((out, raw_sums))
    }

    /// Draws for the joint KDE without materializing N weights per intervention.
    ///
    /// The numerator is a mixture over fit samples,
    /// `p(z_n | y_hat) = sum_j a_j(y_hat) K_z(z_n - z_j)`, so
    /// `w_n ∝ sum_j a_j B[n, j]` with `B[n, j] = K_z(z_n - z_j) / den_n`.
    /// Picking `j ∝ a_j c_j` (`c_j` the column sums of `B`) and then
    /// `n ∝ B[n, j]` has exactly the distribution of the normalized weights.
    fn draw_mixture(
        &self,
        kde: &JointRatioKde,
        mass: &[f64],
        y_hat: &[f64],
        seed: u64,
    ) -> Result<(Vec<usize>, HashMap<i64, f64>)> {
        let mut cache: HashMap<i64, WeightedIndex<f64>> = HashMap::new();
        let mut raw_sums = HashMap::new();
        let mut out = Vec::with_capacity(y_hat.len());
        let n = self.ds.len();
        let kernel = kde.mechanism_kernel_fn();
        for (m, &v) in y_hat.iter().enumerate() {
            let key = cache_key(v, VarKind::Continuous);
            let dist = match cache.entry(key) {
                Entry::Occupied(e) => e.into_mut(),
                Entry::Vacant(e) => {
                    let a = kde.cause_weights(v);
                    let stage: Vec<f64> = a.iter().zip(mass).map(|(a, c)| a * c).collect();
                    raw_sums.insert(key, stage.iter().sum::<f64>() / n as f64);
                    e.insert(WeightedIndex::new(&stage).map_err(|_| Error::AtIntervention {
                        m,
                        source: Box::new(Error::EmptySupport { y_hat: v }),
                    })?)
                }
            };
            let mut r = rng::substream(seed, m as u64);
            let j = dist.sample(&mut r);
            let target = r.random::<f64>() * mass[j];
            let mut acc = 0.0;
            let mut pick = None;
            for i in 0..n {
                let b = kernel(self.ds.z.row(i), j) / self.denominators[i];
                if b > 0.0 {
                    acc += b;
                    pick = Some(i);
                    if acc > target {
                        break;
                    }
                }
            }
            // rounding can leave `target` just above the final sum; the last
            // positive entry is then the right pick
            out.push(pick.expect("column j has positive mass at n = j"));
        }
        Ok((out, raw_sums))
    }
}

/// Weights for a single intervention value (see [`FrontDoorBootstrap::weights`]).
pub fn compute_weights(ds: &ObservationalDataset, cond: &ConditionalDensity, y_hat: f64) -> Result<WeightVector> {
    FrontDoorBootstrap::new(ds, cond)?.weights(y_hat)
}

/// Front-door causal bootstrap of a whole dataset.
pub fn resample(
    ds: &ObservationalDataset,
    cond: &ConditionalDensity,
    policy: &InterventionPolicy,
    seed: u64,
) -> Result<DeconfoundedDataset> {
    FrontDoorBootstrap::new(ds, cond)?.resample(policy, seed)
}
