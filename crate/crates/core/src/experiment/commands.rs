use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::bootstrap::{FrontDoorBootstrap, ResampleDiagnostics};
use crate::data::VarKind;
use crate::density::fit_conditional;
use crate::error::{Error, Result};
use crate::io::{read_dataset, write_deconfounded, write_json, ColumnSpec, Table};
use crate::models::{ClassCounts, Metric};

use super::config::{DensitySpec, ModelKind, ModelSpec, PolicySpec};
use super::learner::TrainedModel;

#[derive(Debug, Clone)]
pub struct DeconfoundOptions {
    pub input: PathBuf,
    pub output: PathBuf,
    /// Defaults to the output path with a `.diagnostics.json` suffix.
    pub diagnostics: Option<PathBuf>,
    pub columns: ColumnSpec,
    pub policy: PolicySpec,
    pub density: DensitySpec,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DeconfoundReport {
    pub input: PathBuf,
    pub output: PathBuf,
    pub diagnostics_path: PathBuf,
    pub rows_in: usize,
    pub rows_out: usize,
    pub estimator: String,
    pub underflow_count: usize,
    pub mean_raw_sum: f64,
    pub seed: u64,
}

pub fn diagnostics_path_for(output: &Path) -> PathBuf {
    let mut name = output.file_stem().unwrap_or_default().to_os_string();
    name.push(".diagnostics.json");
    output.with_file_name(name)
}

/// Reads a CSV, fits `p(z | y)`, resamples, and writes the deconfounded CSV
/// plus its diagnostics JSON.
pub fn deconfound(opts: &DeconfoundOptions) -> Result<DeconfoundReport> {
    let ds = Table::read(&opts.input)?.dataset(&opts.columns)?;
    let cond = fit_conditional(&ds.z, &ds.y, ds.z_kind, ds.y_kind, &opts.density.fit_options())?;
    let policy = opts.policy.resolve(&ds)?;
    let dec = FrontDoorBootstrap::new(&ds, &cond)?.resample(&policy, opts.seed)?;
    let diagnostics_path = opts
        .diagnostics
        .clone()
        .unwrap_or_else(|| diagnostics_path_for(&opts.output));
    write_deconfounded(&opts.output, &dec)?;
    let d: &ResampleDiagnostics = &dec.diagnostics;
    write_json(&diagnostics_path, d)?;
    Ok(DeconfoundReport {
        input: opts.input.clone(),
        output: opts.output.clone(),
        diagnostics_path,
        rows_in: ds.len(),
        rows_out: dec.y_hat.len(),
        estimator: d.estimator.clone(),
        underflow_count: d.underflow_count,
        mean_raw_sum: d.mean_raw_sum,
        seed: opts.seed,
    })
}

#[derive(Debug, Clone)]
pub struct TrainEvalOptions {
    pub train: PathBuf,
    pub tests: Vec<PathBuf>,
    pub model: ModelKind,
    pub spec: ModelSpec,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainEvalRecord {
    pub metric: Metric,
    pub value: f64,
    pub n_test: usize,
    pub seed: u64,
    pub config_hash: String,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub per_class: BTreeMap<i64, ClassCounts>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainEvalReport {
    pub model: serde_json::Value,
    pub results: BTreeMap<String, TrainEvalRecord>,
}

fn train_eval_hash(opts: &TrainEvalOptions) -> String {
    #[derive(Serialize)]
    struct Key<'a> {
        model: ModelKind,
        spec: &'a ModelSpec,
        seed: u64,
    }
    let json = serde_json::to_vec(&Key {
        model: opts.model,
        spec: &opts.spec,
        seed: opts.seed,
    })
    .expect("key serializes");
    hex::encode(Sha256::digest(json))
}

/// Trains one learner and evaluates it on each test file, keyed by file name.
pub fn train_eval(opts: &TrainEvalOptions) -> Result<TrainEvalReport> {
    if opts.tests.is_empty() {
        return Err(Error::InvalidInput("at least one test file is required".into()));
    }
    let kind = opts.model.label_kind();
    let train = read_dataset(&opts.train, kind, VarKind::Continuous)?;
    let model = TrainedModel::fit(opts.model, &opts.spec, &train, opts.seed)?;
    let hash = train_eval_hash(opts);
    let mut results = BTreeMap::new();
    for path in &opts.tests {
        let test = read_dataset(path, kind, VarKind::Continuous)?;
        let report = model.evaluate(&test)?;
        let key = path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        if results.contains_key(&key) {
            return Err(Error::InvalidInput(format!("two test files share the name `{key}`")));
        }
        results.insert(
            key,
            TrainEvalRecord {
                metric: report.metric,
                value: report.value,
                n_test: report.n_test,
                seed: opts.seed,
                config_hash: hash.clone(),
                per_class: report.per_class,
            },
        );
    }
    Ok(TrainEvalReport {
        model: model.to_json()?,
        results,
    })
}
