use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::bootstrap::{DeconfoundedDataset, FrontDoorBootstrap};
use crate::data::{ObservationalDataset, VarKind};
use crate::density::fit_conditional;
use crate::error::{Error, Result};
use crate::io::{fmt_f64, write_json};
use crate::mnist::{load_banks, MnistBanks};
use crate::models::decision_boundary_1d;
use crate::rng::{self, derive_seed};
use crate::scm::{gen_background_mnist, gen_classification, gen_regression, BackgroundMnistConfig, RegressionScmConfig};

use super::config::{ExperimentConfig, ExperimentKind, SeedPlan};
use super::learner::TrainedModel;
use super::results::{CellValue, Metadata, RepeatRecord, ResultsTable, TestSet};

/// The four generated splits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    TrainConfounded,
    TestConfounded,
    TrainNonConfounded,
    TestNonConfounded,
}

impl Split {
    pub const ALL: [Split; 4] = [
        Split::TrainConfounded,
        Split::TestConfounded,
        Split::TrainNonConfounded,
        Split::TestNonConfounded,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Split::TrainConfounded => "train_confounded",
            Split::TestConfounded => "test_confounded",
            Split::TrainNonConfounded => "train_non_confounded",
            Split::TestNonConfounded => "test_non_confounded",
        }
    }

    fn index(self) -> u64 {
        self as u64
    }

    fn is_train(self) -> bool {
        matches!(self, Split::TrainConfounded | Split::TrainNonConfounded)
    }

    fn confounded(self) -> bool {
        matches!(self, Split::TrainConfounded | Split::TestConfounded)
    }
}

/// Everything a generator needs besides seeds.
pub struct DataSource<'a> {
    cfg: &'a ExperimentConfig,
    banks: Option<MnistBanks>,
}

impl<'a> DataSource<'a> {
    pub fn new(cfg: &'a ExperimentConfig) -> Result<Self> {
        let banks = match cfg.experiment {
            ExperimentKind::BackgroundMnist => {
                let dir = cfg.mnist_dir.as_deref().ok_or_else(|| {
                    Error::Config("background_mnist needs `mnist_dir` (or MECHLEARN_MNIST_DIR)".into())
                })?;
                Some(load_banks(dir, &cfg.mnist.digits)?)
            }
            ExperimentKind::CustomCsv => {
                return Err(Error::Config(
                    "custom_csv data is not generated; use deconfound and train-eval on your files".into(),
                ))
            }
            _ => None,
        };
        Ok(DataSource { cfg, banks })
    }

    /// Split `split` of the repeat whose data seed is `data_seed`.
    pub fn generate(&self, split: Split, data_seed: u64) -> Result<ObservationalDataset> {
        let cfg = self.cfg;
        let n = if split.is_train() { cfg.sizes.train } else { cfg.sizes.test };
        let seed = derive_seed(data_seed, split.index());
        match cfg.experiment {
            ExperimentKind::SynthClassification => gen_classification(n, &cfg.classification, split.confounded(), seed),
            ExperimentKind::SynthRegression => {
                let scm = if split.confounded() {
                    cfg.regression.clone()
                } else {
                    RegressionScmConfig { c0: 0.0, ..cfg.regression.clone() }
                };
                gen_regression(n, &scm, seed)
            }
            ExperimentKind::BackgroundMnist => {
                let banks = self.banks.as_ref().expect("banks loaded for MNIST");
                let bank = if split.is_train() { &banks.train } else { &banks.test };
                let scm = if split.confounded() {
                    cfg.mnist.clone()
                } else {
                    BackgroundMnistConfig { q: 0.5, ..cfg.mnist.clone() }
                };
                gen_background_mnist(n, &scm, bank, seed)
            }
            ExperimentKind::CustomCsv => unreachable!("rejected in DataSource::new"),
        }
    }
}

/// `target` rows drawn from `pool`: a random subset when shrinking, every row
/// plus draws with replacement when growing.
fn resize(pool: &[usize], target: usize, rng: &mut rng::Rng) -> Vec<usize> {
    let mut pool = pool.to_vec();
    pool.shuffle(rng);
    if target <= pool.len() {
        pool.truncate(target);
        return pool;
    }
    let extra: Vec<usize> = (0..target - pool.len()).map(|_| pool[rng.random_range(0..pool.len())]).collect();
    pool.extend(extra);
    pool
}

/// Classical training set with the deconfounded set's size and label
/// marginal, by random over/undersampling of the observational rows.
pub fn matched_classical(train: &ObservationalDataset, dec: &DeconfoundedDataset, seed: u64) -> Result<ObservationalDataset> {
    let mut rng = rng::stream(seed);
    let mut rows = Vec::with_capacity(dec.y_hat.len());
    match train.y_kind {
        VarKind::Discrete => {
            let mut targets: BTreeMap<i64, usize> = BTreeMap::new();
            for &y in &dec.y_hat {
                *targets.entry(y as i64).or_default() += 1;
            }
            for (label, count) in targets {
                let pool: Vec<usize> = (0..train.len()).filter(|&i| train.y[i] as i64 == label).collect();
                if pool.is_empty() {
                    return Err(Error::UnknownLabel(label));
                }
                rows.extend(resize(&pool, count, &mut rng));
            }
            rows.shuffle(&mut rng);
        }
        VarKind::Continuous => {
            let all: Vec<usize> = (0..train.len()).collect();
            rows = resize(&all, dec.y_hat.len(), &mut rng);
        }
    }
    Ok(train.select_rows(&rows))
}

/// Tables and plot data of a finished reproduction.
#[derive(Debug, Clone)]
pub struct Reproduction {
    pub table: ResultsTable,
    pub plots: Vec<PlotData>,
}

/// A CSV for external plotting.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotData {
    pub name: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl PlotData {
    fn new(name: &str, headers: &[&str]) -> Self {
        PlotData {
            name: name.into(),
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.headers.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.iter().map(|&v| fmt_f64(v)).collect::<Vec<_>>().join(","));
            out.push('\n');
        }
        out
    }
}

fn scatter(name: &str, ds: &ObservationalDataset) -> PlotData {
    let mut headers: Vec<String> = (0..ds.dx()).map(|j| format!("x_{j}")).collect();
    headers.push("y".into());
    PlotData {
        name: name.into(),
        headers,
        rows: ds
            .x
            .iter_rows()
            .zip(&ds.y)
            .map(|(r, &y)| r.iter().copied().chain([y]).collect())
            .collect(),
    }
}

fn row_key(ds: &ObservationalDataset, i: usize) -> Vec<u64> {
    ds.x.row(i)
        .iter()
        .chain(ds.z.row(i))
        .chain([&ds.y[i]])
        .map(|v| v.to_bits())
        .collect()
}

fn disjoint(train: &ObservationalDataset, test: &ObservationalDataset) -> bool {
    let seen: HashSet<Vec<u64>> = (0..train.len()).map(|i| row_key(train, i)).collect();
    (0..test.len()).all(|i| !seen.contains(&row_key(test, i)))
}

struct RepeatOutput {
    record: RepeatRecord,
    plots: Vec<PlotData>,
}

fn run_repeat(cfg: &ExperimentConfig, source: &DataSource, r: usize, seeds: SeedPlan, with_plots: bool) -> Result<RepeatOutput> {
    let train = source.generate(Split::TrainConfounded, seeds.data)?;
    let tests = [
        (TestSet::Confounded, source.generate(Split::TestConfounded, seeds.data)?),
        (TestSet::NonConfounded, source.generate(Split::TestNonConfounded, seeds.data)?),
    ];
    debug_assert!(
        tests.iter().all(|(_, t)| disjoint(&train, t)),
        "repeat {r}: a test row also appears in train"
    );

    let cond = fit_conditional(&train.z, &train.y, train.z_kind, train.y_kind, &cfg.density.fit_options())?;
    let policy = cfg.policy_spec().resolve(&train)?;
    let dec = FrontDoorBootstrap::new(&train, &cond)?.resample(&policy, derive_seed(seeds.bootstrap, 0))?;
    let classical = matched_classical(&train, &dec, derive_seed(seeds.bootstrap, 1))?;
    let mechanism = dec.to_observational();

    let kind = cfg.model_kind();
    let mut cells = Vec::with_capacity(4);
    let mut extras = BTreeMap::new();
    extras.insert("mean_raw_sum".to_string(), dec.diagnostics.mean_raw_sum);
    extras.insert("underflow_count".to_string(), dec.diagnostics.underflow_count as f64);
    let mut models = Vec::with_capacity(2);
    for (ml, set) in [(false, &classical), (true, &mechanism)] {
        let model = TrainedModel::fit(kind, &cfg.model, set, seeds.model)?;
        for (test_set, test) in &tests {
            cells.push(CellValue {
                mechanism_learning: ml,
                test_set: *test_set,
                value: model.evaluate(test)?.value,
            });
        }
        let tag = if ml { "mechanism" } else { "classical" };
        if let Some(lin) = model.linear() {
            match cfg.experiment {
                ExperimentKind::SynthRegression if lin.weights.len() == 1 && model.standardizer.is_none() => {
                    extras.insert(format!("{tag}_slope"), lin.weights[0]);
                }
                ExperimentKind::SynthClassification if model.standardizer.is_none() => {
                    if let Ok(x1) = decision_boundary_1d(lin, &[0.0]) {
                        extras.insert(format!("{tag}_boundary_x1"), x1[0]);
                    }
                }
                _ => {}
            }
        }
        models.push(model);
    }

    let mut plots = Vec::new();
    if with_plots {
        match cfg.experiment {
            ExperimentKind::SynthClassification => {
                plots.push(scatter("scatter_classical", &classical));
                plots.push(scatter("scatter_mechanism", &mechanism));
                let grid: Vec<f64> = (-60..=60).map(|i| i as f64 / 10.0).collect();
                let mut boundary = PlotData::new("boundary", &["x_1", "x_0_classical", "x_0_mechanism"]);
                let lines: Vec<Option<Vec<f64>>> = models
                    .iter()
                    .map(|m| m.linear().and_then(|l| decision_boundary_1d(l, &grid).ok()))
                    .collect();
                if let [Some(a), Some(b)] = lines.as_slice() {
                    boundary.rows = grid.iter().zip(a).zip(b).map(|((&g, &p), &q)| vec![g, p, q]).collect();
                    plots.push(boundary);
                }
            }
            ExperimentKind::SynthRegression => {
                plots.push(scatter("scatter_classical", &classical));
                plots.push(scatter("scatter_mechanism", &mechanism));
                let xs = train.x.col_values(0);
                let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let grid = crate::data::Matrix::column((0..=100).map(|i| lo + (hi - lo) * i as f64 / 100.0).collect());
                let mut lines = PlotData::new("fit_lines", &["x_0", "y_classical", "y_mechanism"]);
                let (a, b) = (models[0].predict(&grid)?, models[1].predict(&grid)?);
                lines.rows = grid.as_slice().iter().zip(a).zip(b).map(|((&g, p), q)| vec![g, p, q]).collect();
                plots.push(lines);
            }
            _ => {}
        }
    }
    Ok(RepeatOutput {
        record: RepeatRecord {
            repeat: r,
            seeds,
            cells,
            extras,
        },
        plots,
    })
}

/// Runs every repeat of a benchmark experiment and aggregates the results.
pub fn reproduce(cfg: &ExperimentConfig) -> Result<Reproduction> {
    cfg.validate()?;
    let source = DataSource::new(cfg)?;
    let plan = cfg.seeds.plan();
    let mut records = Vec::with_capacity(cfg.repeats);
    let mut plots = Vec::new();
    for r in 0..cfg.repeats {
        let out = run_repeat(cfg, &source, r, plan.repeat(r), r == 0)?;
        records.push(out.record);
        plots.extend(out.plots);
    }
    let policy = serde_json::to_string(&cfg.policy_spec())?;
    let metadata = Metadata {
        config_hash: cfg.hash(),
        seeds: plan,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        repeats: cfg.repeats,
        n_train: cfg.sizes.train,
        n_test: cfg.sizes.test,
        policy,
    };
    let kind = cfg.model_kind();
    Ok(Reproduction {
        table: ResultsTable::build(cfg.experiment.name(), kind.name(), kind.metric(), metadata, records),
        plots,
    })
}

/// Writes `results.{json,txt,csv}`, `per_repeat.csv` and `plots/*.csv`; returns the paths.
pub fn write_reproduction(out_dir: &Path, rep: &Reproduction) -> Result<Vec<PathBuf>> {
    let write = |path: PathBuf, text: &str| -> Result<PathBuf> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    };
    let mut paths = vec![
        write(out_dir.join("results.json"), &rep.table.to_json())?,
        write(out_dir.join("results.txt"), &rep.table.to_text())?,
        write(out_dir.join("results.csv"), &rep.table.to_csv())?,
        write(out_dir.join("per_repeat.csv"), &rep.table.per_repeat_csv())?,
    ];
    for p in &rep.plots {
        paths.push(write(out_dir.join("plots").join(format!("{}.csv", p.name)), &p.to_csv())?);
    }
    Ok(paths)
}

/// One generated file.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct GeneratedFile {
    pub path: PathBuf,
    pub rows: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct GenerateReport {
    pub experiment: String,
    pub data_seed: u64,
    pub files: Vec<GeneratedFile>,
}

/// Writes the four splits of repeat 0 as CSV files named `<experiment>_<split>.csv`.
/// The hidden confounder is written as a `u_debug` column only when asked for.
pub fn generate(cfg: &ExperimentConfig, out_dir: &Path, with_u_debug: bool) -> Result<GenerateReport> {
    cfg.validate()?;
    let source = DataSource::new(cfg)?;
    let data_seed = cfg.seeds.plan().repeat(0).data;
    // generate everything before touching the filesystem
    let splits = Split::ALL
        .iter()
        .map(|&s| source.generate(s, data_seed).map(|ds| (s, ds)))
        .collect::<Result<Vec<_>>>()?;
    let mut files = Vec::with_capacity(4);
    for (split, mut ds) in splits {
        if !with_u_debug {
            ds.u_debug = None;
        }
        let path = out_dir.join(format!("{}_{}.csv", cfg.experiment.name(), split.name()));
        crate::io::write_dataset(&path, &ds)?;
        files.push(GeneratedFile {
            path,
            rows: ds.len(),
            seed: derive_seed(data_seed, split.index()),
        });
    }
    let report = GenerateReport {
        experiment: cfg.experiment.name().into(),
        data_seed,
        files,
    };
    write_json(&out_dir.join(format!("{}_seeds.json", cfg.experiment.name())), &report)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resize_shrinks_without_and_grows_with_replacement() {
        let mut r = rng::stream(1);
        let pool: Vec<usize> = (10..20).collect();
        let mut small = resize(&pool, 4, &mut r);
        small.sort_unstable();
        small.dedup();
        assert_eq!(small.len(), 4);
        let big = resize(&pool, 25, &mut r);
        assert_eq!(big.len(), 25);
        for p in &pool {
            assert!(big.contains(p));
        }
    }

    #[test]
    fn small_reproduction_is_deterministic() {
        let mut cfg = ExperimentConfig::default();
        cfg.repeats = 2;
        cfg.sizes.train = 300;
        cfg.sizes.test = 100;
        let a = reproduce(&cfg).unwrap();
        let b = reproduce(&cfg).unwrap();
        assert_eq!(a.table.to_json(), b.table.to_json());
        assert_eq!(a.table.rows.len(), 4);
        assert!(a.table.extra("mechanism_boundary_x1").is_some());
        assert_eq!(a.plots.len(), 3);
    }

    #[test]
    fn classical_set_matches_label_marginal() {
        let mut cfg = ExperimentConfig::default();
        cfg.sizes.train = 400;
        let source = DataSource::new(&cfg).unwrap();
        let train = source.generate(Split::TrainConfounded, 5).unwrap();
        let cond = fit_conditional(&train.z, &train.y, train.z_kind, train.y_kind, &Default::default()).unwrap();
        let policy = crate::bootstrap::InterventionPolicy::new(crate::bootstrap::PolicyKind::UniformLabels, Some(600)).unwrap();
        let dec = FrontDoorBootstrap::new(&train, &cond).unwrap().resample(&policy, 3).unwrap();
        let classical = matched_classical(&train, &dec, 4).unwrap();
        let count = |y: &[f64], l: f64| y.iter().filter(|&&v| v == l).count();
        assert_eq!(classical.len(), 600);
        assert_eq!(count(&classical.y, 2.0), count(&dec.y_hat, 2.0));
    }

    #[test]
    fn generated_splits_share_no_rows() {
        let cfg = ExperimentConfig::for_experiment(ExperimentKind::SynthRegression);
        let source = DataSource::new(&cfg).unwrap();
        let train = source.generate(Split::TrainConfounded, 9).unwrap();
        for split in [Split::TestConfounded, Split::TestNonConfounded] {
            assert!(disjoint(&train, &source.generate(split, 9).unwrap()));
        }
        assert!(!disjoint(&train, &train.select_rows(&[3])));
    }
}
