use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bootstrap::{InterventionPolicy, PolicyKind};
use crate::data::{ObservationalDataset, VarKind};
use crate::density::FitOptions;
use crate::error::{Error, Result};
use crate::models::{Metric, SvmParams, SvmSolver};
use crate::rng::derive_seed;
use crate::scm::{BackgroundMnistConfig, ClassificationScmConfig, RegressionScmConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    #[default]
    SynthClassification,
    SynthRegression,
    BackgroundMnist,
    CustomCsv,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::SynthClassification => "synth_classification",
            ExperimentKind::SynthRegression => "synth_regression",
            ExperimentKind::BackgroundMnist => "background_mnist",
            ExperimentKind::CustomCsv => "custom_csv",
        }
    }

    pub fn default_model(self) -> ModelKind {
        match self {
            ExperimentKind::SynthRegression => ModelKind::Ols,
            ExperimentKind::BackgroundMnist => ModelKind::Knn,
            ExperimentKind::SynthClassification | ExperimentKind::CustomCsv => ModelKind::Svm,
        }
    }

    pub fn default_policy(self) -> PolicySpec {
        match self {
            ExperimentKind::SynthRegression => PolicySpec::UniformRange {
                lo: None,
                hi: None,
                size: None,
            },
            _ => PolicySpec::MatchObservational { size: None },
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let all = [
            ExperimentKind::SynthClassification,
            ExperimentKind::SynthRegression,
            ExperimentKind::BackgroundMnist,
            ExperimentKind::CustomCsv,
        ];
        all.into_iter()
            .find(|k| k.name() == s.replace('-', "_"))
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown experiment `{s}`; expected one of synth_classification, synth_regression, background_mnist, custom_csv"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Svm,
    Ols,
    Knn,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Svm => "svm",
            ModelKind::Ols => "ols",
            ModelKind::Knn => "knn",
        }
    }

    pub fn metric(self) -> Metric {
        match self {
            ModelKind::Ols => Metric::Rmse,
            ModelKind::Svm | ModelKind::Knn => Metric::Accuracy,
        }
    }

    /// Kind the cause column must have for this learner.
    pub fn label_kind(self) -> VarKind {
        match self {
            ModelKind::Ols => VarKind::Continuous,
            ModelKind::Svm | ModelKind::Knn => VarKind::Discrete,
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "svm" => Ok(ModelKind::Svm),
            "ols" => Ok(ModelKind::Ols),
            "knn" => Ok(ModelKind::Knn),
            other => Err(Error::Config(format!("unknown model `{other}`; expected svm, ols or knn"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    /// `None` picks the experiment's default learner.
    pub kind: Option<ModelKind>,
    pub c: f64,
    pub epochs: usize,
    pub solver: SvmSolver,
    pub k: usize,
    /// z-score features with statistics of the training set.
    pub standardize: bool,
}

impl Default for ModelSpec {
    fn default() -> Self {
        let svm = SvmParams::default();
        ModelSpec {
            kind: None,
            c: svm.c,
            epochs: svm.epochs,
            solver: svm.solver,
            k: 5,
            standardize: false,
        }
    }
}

impl ModelSpec {
    pub fn svm_params(&self) -> SvmParams {
        SvmParams {
            c: self.c,
            epochs: self.epochs,
            solver: self.solver,
            ..SvmParams::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Config(format!("model.c must be positive, got {}", self.c)));
        }
        if self.epochs == 0 {
            return Err(Error::Config("model.epochs must be at least 1".into()));
        }
        if self.k == 0 {
            return Err(Error::Config("model.k must be at least 1".into()));
        }
        Ok(())
    }
}

/// Intervention policy as written in a config file. Unlike
/// [`InterventionPolicy`] it may depend on the training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicySpec {
    MatchObservational {
        size: Option<usize>,
    },
    UniformLabels {
        size: Option<usize>,
    },
    /// Uniform on `[lo, hi]`; missing ends default to the observed min/max of the cause.
    UniformRange {
        lo: Option<f64>,
        hi: Option<f64>,
        size: Option<usize>,
    },
    ClassBalanced {
        targets: BTreeMap<String, usize>,
    },
    Explicit {
        values: Vec<f64>,
    },
}

impl PolicySpec {
    pub fn resolve(&self, ds: &ObservationalDataset) -> Result<InterventionPolicy> {
        let (kind, size) = match self {
            PolicySpec::MatchObservational { size } => (PolicyKind::MatchObservational, *size),
            PolicySpec::UniformLabels { size } => (PolicyKind::UniformLabels, *size),
            PolicySpec::UniformRange { lo, hi, size } => {
                let min = ds.y.iter().copied().fold(f64::INFINITY, f64::min);
                let max = ds.y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (
                    PolicyKind::UniformContinuous {
                        lo: lo.unwrap_or(min),
                        hi: hi.unwrap_or(max),
                    },
                    *size,
                )
            }
            PolicySpec::ClassBalanced { targets } => {
                let parsed = targets
                    .iter()
                    .map(|(k, &v)| {
                        k.trim()
                            .parse::<i64>()
                            .map(|label| (label, v))
                            .map_err(|_| Error::Config(format!("class-balanced target key `{k}` is not an integer label")))
                    })
                    .collect::<Result<BTreeMap<_, _>>>()?;
                (PolicyKind::ClassBalanced { targets: parsed }, None)
            }
            PolicySpec::Explicit { values } => (PolicyKind::Explicit { values: values.clone() }, None),
        };
        InterventionPolicy::new(kind, size)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensitySpec {
    /// Additive smoothing for frequency tables.
    pub alpha: f64,
    /// Fixed bandwidths; Silverman's rule when absent.
    pub bandwidth: Option<Vec<f64>>,
}

impl Default for DensitySpec {
    fn default() -> Self {
        DensitySpec {
            alpha: 0.0,
            bandwidth: None,
        }
    }
}

impl DensitySpec {
    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            alpha: self.alpha,
            labels: None,
            bandwidth: self.bandwidth.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sizes {
    pub train: usize,
    pub test: usize,
}

impl Default for Sizes {
    fn default() -> Self {
        Sizes { train: 5000, test: 1000 }
    }
}

/// `base` seeds everything; `data`, `bootstrap` and `model` override one stream each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub base: u64,
    pub data: Option<u64>,
    pub bootstrap: Option<u64>,
    pub model: Option<u64>,
}

/// Fully resolved seeds of the three independent streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedPlan {
    pub data: u64,
    pub bootstrap: u64,
    pub model: u64,
}

impl Seeds {
    pub fn plan(&self) -> SeedPlan {
        SeedPlan {
            data: self.data.unwrap_or_else(|| derive_seed(self.base, 0)),
            bootstrap: self.bootstrap.unwrap_or_else(|| derive_seed(self.base, 1)),
            model: self.model.unwrap_or_else(|| derive_seed(self.base, 2)),
        }
    }
}

impl SeedPlan {
    /// Seeds of repeat `r`.
    pub fn repeat(&self, r: usize) -> SeedPlan {
        SeedPlan {
            data: derive_seed(self.data, r as u64),
            bootstrap: derive_seed(self.bootstrap, r as u64),
            model: derive_seed(self.model, r as u64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub repeats: usize,
    pub sizes: Sizes,
    pub seeds: Seeds,
    /// `None` picks the experiment's default policy.
    pub policy: Option<PolicySpec>,
    pub model: ModelSpec,
    pub density: DensitySpec,
    pub classification: ClassificationScmConfig,
    /// Confounded variant; the non-confounded one sets `c0 = 0`.
    pub regression: RegressionScmConfig,
    /// Confounded variant; the non-confounded one sets `q = 0.5`.
    pub mnist: BackgroundMnistConfig,
    pub mnist_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: ExperimentKind::default(),
            repeats: 30,
            sizes: Sizes::default(),
            seeds: Seeds::default(),
            policy: None,
            model: ModelSpec::default(),
            density: DensitySpec::default(),
            classification: ClassificationScmConfig::default(),
            regression: RegressionScmConfig::confounded(),
            mnist: BackgroundMnistConfig::default(),
            mnist_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn for_experiment(experiment: ExperimentKind) -> Self {
        ExperimentConfig {
            experiment,
            ..Default::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn model_kind(&self) -> ModelKind {
        self.model.kind.unwrap_or_else(|| self.experiment.default_model())
    }

    pub fn policy_spec(&self) -> PolicySpec {
        self.policy.clone().unwrap_or_else(|| self.experiment.default_policy())
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        if self.sizes.train == 0 {
            return Err(Error::Config("sizes.train must be at least 1".into()));
        }
        if self.sizes.test == 0 {
            return Err(Error::Config("sizes.test must be at least 1".into()));
        }
        if self.density.alpha < 0.0 || !self.density.alpha.is_finite() {
            return Err(Error::Config(format!("density.alpha must be >= 0, got {}", self.density.alpha)));
        }
        self.model.validate()?;
        let needs = self.experiment.default_model().label_kind();
        if self.model_kind().label_kind() != needs {
            return Err(Error::Config(format!(
                "model `{}` does not fit experiment `{}`",
                self.model_kind().name(),
                self.experiment
            )));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_sections_override_defaults() {
        let cfg = ExperimentConfig::from_toml(
            r#"
            experiment = "synth_regression"
            repeats = 3

            [sizes]
            train = 200

            [seeds]
            base = 9

            [policy]
            kind = "uniform_range"
            lo = -1.0

            [model]
            standardize = true
            "#,
        )
        .unwrap();
        assert_eq!(cfg.experiment, ExperimentKind::SynthRegression);
        assert_eq!(cfg.sizes, Sizes { train: 200, test: 1000 });
        assert_eq!(cfg.model_kind(), ModelKind::Ols);
        assert!(cfg.model.standardize);
        assert_eq!(
            cfg.policy,
            Some(PolicySpec::UniformRange {
                lo: Some(-1.0),
                hi: None,
                size: None
            })
        );
    }

    #[test]
    fn unknown_field_is_rejected_with_its_name() {
        let err = ExperimentConfig::from_toml("[sizes]\ntrian = 5\n").unwrap_err();
        assert!(err.to_string().contains("trian"), "{err}");
    }

    #[test]
    fn validation_names_the_field() {
        let mut cfg = ExperimentConfig::default();
        cfg.sizes.train = 0;
        assert!(cfg.validate().unwrap_err().to_string().contains("sizes.train"));
        let mut cfg = ExperimentConfig::for_experiment(ExperimentKind::SynthRegression);
        cfg.model.kind = Some(ModelKind::Knn);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = ExperimentConfig::for_experiment(ExperimentKind::BackgroundMnist);
        cfg.policy = Some(PolicySpec::ClassBalanced {
            targets: [("1".to_string(), 10), ("2".to_string(), 20)].into(),
        });
        cfg.mnist_dir = Some("data/mnist".into());
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn seed_streams_are_distinct() {
        let plan = Seeds::default().plan();
        assert!(plan.data != plan.bootstrap && plan.bootstrap != plan.model);
        assert_ne!(plan.repeat(0), plan.repeat(1));
        let pinned = Seeds {
            data: Some(5),
            ..Default::default()
        };
        assert_eq!(pinned.plan().data, 5);
        assert_eq!(pinned.plan().model, plan.model);
    }
}
