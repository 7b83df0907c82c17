use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mechlearn::experiment::{
    self, DeconfoundOptions, ExperimentConfig, ExperimentKind, ModelKind, PolicySpec, TrainEvalOptions,
};
use mechlearn::io::ColumnSpec;
use mechlearn::models::SvmSolver;
use mechlearn::{Error, VarKind};

#[derive(Parser)]
#[command(name = "mechlearn", version, about = "Front-door causal bootstrapping for deconfounded supervised learning")]
struct Cli {
    /// Base seed (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML experiment config; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Table,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Write confounded and non-confounded train/test CSVs.
    Generate(GenerateArgs),
    /// Resample a CSV into a deconfounded CSV plus diagnostics JSON.
    Deconfound(DeconfoundArgs),
    /// Train one learner and evaluate it on test CSVs.
    TrainEval(TrainEvalArgs),
    /// Run a benchmark experiment over repeats and emit the results table.
    Reproduce(ReproduceArgs),
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    experiment: Option<String>,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
    /// Directory with the uncompressed MNIST IDX files.
    #[arg(long, env = "MECHLEARN_MNIST_DIR")]
    mnist_dir: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Also write the hidden confounder as a `u_debug` column.
    #[arg(long)]
    u_debug: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyName {
    MatchObservational,
    UniformLabels,
    UniformRange,
    ClassBalanced,
    Explicit,
}

#[derive(Args)]
struct PolicyArgs {
    #[arg(long, value_enum)]
    policy: Option<PolicyName>,
    /// Bootstrap size M.
    #[arg(long)]
    size: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    lo: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    hi: Option<f64>,
    /// Class-balanced counts, e.g. `1:500,2:500`.
    #[arg(long)]
    targets: Option<String>,
    /// Explicit intervention values, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    values: Vec<f64>,
}

impl PolicyArgs {
    fn spec(&self) -> Result<Option<PolicySpec>, Error> {
        let Some(name) = self.policy else {
            if self.size.is_some() || self.lo.is_some() || self.hi.is_some() || self.targets.is_some() {
                return Err(Error::Config("policy parameters given without --policy".into()));
            }
            return Ok(None);
        };
        let size = self.size;
        Ok(Some(match name {
            PolicyName::MatchObservational => PolicySpec::MatchObservational { size },
            PolicyName::UniformLabels => PolicySpec::UniformLabels { size },
            PolicyName::UniformRange => PolicySpec::UniformRange {
                lo: self.lo,
                hi: self.hi,
                size,
            },
            PolicyName::ClassBalanced => {
                let raw = self
                    .targets
                    .as_deref()
                    .ok_or_else(|| Error::Config("--policy class-balanced needs --targets".into()))?;
                PolicySpec::ClassBalanced {
                    targets: parse_targets(raw)?,
                }
            }
            PolicyName::Explicit => {
                if self.values.is_empty() {
                    return Err(Error::Config("--policy explicit needs --values".into()));
                }
                PolicySpec::Explicit {
                    values: self.values.clone(),
                }
            }
        }))
    }
}

fn parse_targets(raw: &str) -> Result<BTreeMap<String, usize>, Error> {
    raw.split(',')
        .map(|pair| {
            let (label, count) = pair
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("target `{pair}` is not `label:count`")))?;
            let count = count
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("target count `{count}` is not a non-negative integer")))?;
            Ok((label.trim().to_string(), count))
        })
        .collect()
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    model: Option<String>,
    /// SVM regularization constant.
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, value_enum)]
    solver: Option<SolverName>,
    /// Neighbours for kNN.
    #[arg(long)]
    k: Option<usize>,
    /// z-score features using training statistics.
    #[arg(long)]
    standardize: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverName {
    DualCoordinateDescent,
    Subgradient,
}

impl ModelArgs {
    fn apply(&self, cfg: &mut ExperimentConfig) -> Result<(), Error> {
        if let Some(m) = &self.model {
            cfg.model.kind = Some(m.parse()?);
        }
        if let Some(c) = self.c {
            cfg.model.c = c;
        }
        if let Some(e) = self.epochs {
            cfg.model.epochs = e;
        }
        if let Some(s) = self.solver {
            cfg.model.solver = match s {
                SolverName::DualCoordinateDescent => SvmSolver::DualCoordinateDescent,
                SolverName::Subgradient => SvmSolver::Subgradient,
            };
        }
        if let Some(k) = self.k {
            cfg.model.k = k;
        }
        if self.standardize {
            cfg.model.standardize = true;
        }
        Ok(())
    }
}

#[derive(Args)]
struct DensityArgs {
    /// Additive smoothing for frequency tables.
    #[arg(long)]
    alpha: Option<f64>,
    /// Fixed kernel bandwidths, comma separated (cause bandwidth last for a continuous cause).
    #[arg(long, value_delimiter = ',')]
    bandwidth: Vec<f64>,
}

impl DensityArgs {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(a) = self.alpha {
            cfg.density.alpha = a;
        }
        if !self.bandwidth.is_empty() {
            cfg.density.bandwidth = Some(self.bandwidth.clone());
        }
    }
}

#[derive(Args)]
struct DeconfoundArgs {
    #[arg(long)]
    input: PathBuf,
    /// Defaults to `<out-dir>/<input stem>_deconfounded.csv`.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    diagnostics: Option<PathBuf>,
    #[arg(long, default_value = "y")]
    cause: String,
    /// Mechanism columns; defaults to z_0, z_1, ...
    #[arg(long, value_delimiter = ',')]
    mechanism: Vec<String>,
    /// Feature columns; defaults to every other column.
    #[arg(long, value_delimiter = ',')]
    features: Vec<String>,
    #[arg(long, default_value = "discrete")]
    cause_kind: String,
    #[arg(long, default_value = "continuous")]
    mechanism_kind: String,
    #[command(flatten)]
    policy: PolicyArgs,
    #[command(flatten)]
    density: DensityArgs,
}

#[derive(Args)]
struct TrainEvalArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long = "test", required = true)]
    tests: Vec<PathBuf>,
    /// Report path; defaults to `<out-dir>/train_eval.json`.
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct ReproduceArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    repeats: Option<usize>,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    policy: PolicyArgs,
    #[command(flatten)]
    density: DensityArgs,
}

fn base_config(cli: &Cli, experiment: Option<&str>) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(e) = experiment {
        cfg.experiment = e.parse::<ExperimentKind>()?;
    }
    if let Some(s) = cli.seed {
        cfg.seeds.base = s;
    }
    Ok(cfg)
}

fn apply_data(cfg: &mut ExperimentConfig, args: &DataArgs) {
    if let Some(n) = args.n_train {
        cfg.sizes.train = n;
    }
    if let Some(n) = args.n_test {
        cfg.sizes.test = n;
    }
    if let Some(d) = &args.mnist_dir {
        cfg.mnist_dir = Some(d.clone());
    }
}

fn print_json(value: serde_json::Value) -> Result<(), Error> {
    println!("{}", serde_json::to_string_pretty(&value)?);
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Error> {
    match &cli.command {
        Command::Generate(args) => {
            let mut cfg = base_config(cli, args.data.experiment.as_deref())?;
            apply_data(&mut cfg, &args.data);
            let report = experiment::generate(&cfg, &cli.out_dir, args.u_debug)?;
            match cli.format {
                Format::Json => print_json(serde_json::to_value(&report)?)?,
                Format::Table => {
                    println!("{} (data seed {})", report.experiment, report.data_seed);
                    for f in &report.files {
                        println!("  {}  {} rows  seed {}", f.path.display(), f.rows, f.seed);
                    }
                }
                Format::Csv => {
                    println!("path,rows,seed");
                    for f in &report.files {
                        println!("{},{},{}", f.path.display(), f.rows, f.seed);
                    }
                }
            }
        }
        Command::Deconfound(args) => {
            let mut cfg = base_config(cli, None)?;
            args.density.apply(&mut cfg);
            let policy = args
                .policy
                .spec()?
                .or(cfg.policy.clone())
                .unwrap_or(PolicySpec::MatchObservational { size: None });
            let output = args.output.clone().unwrap_or_else(|| {
                let stem = args.input.file_stem().unwrap_or_default().to_string_lossy();
                cli.out_dir.join(format!("{stem}_deconfounded.csv"))
            });
            let opts = DeconfoundOptions {
                input: args.input.clone(),
                output,
                diagnostics: args.diagnostics.clone(),
                columns: ColumnSpec {
                    cause: args.cause.clone(),
                    mechanism: args.mechanism.clone(),
                    features: (!args.features.is_empty()).then(|| args.features.clone()),
                    y_kind: args.cause_kind.parse::<VarKind>()?,
                    z_kind: args.mechanism_kind.parse::<VarKind>()?,
                },
                policy,
                density: cfg.density.clone(),
                seed: cfg.seeds.plan().bootstrap,
            };
            let report = experiment::deconfound(&opts)?;
            match cli.format {
                Format::Json => print_json(serde_json::to_value(&report)?)?,
                Format::Table => {
                    println!(
                        "{} -> {}  ({} -> {} rows, {})",
                        report.input.display(),
                        report.output.display(),
                        report.rows_in,
                        report.rows_out,
                        report.estimator
                    );
                    println!(
                        "mean raw weight sum {:.6}, floored denominators {}, seed {}",
                        report.mean_raw_sum, report.underflow_count, report.seed
                    );
                    println!("diagnostics: {}", report.diagnostics_path.display());
                }
                Format::Csv => {
                    println!("output,rows_out,underflow_count,mean_raw_sum,seed");
                    println!(
                        "{},{},{},{},{}",
                        report.output.display(),
                        report.rows_out,
                        report.underflow_count,
                        report.mean_raw_sum,
                        report.seed
                    );
                }
            }
        }
        Command::TrainEval(args) => {
            let mut cfg = base_config(cli, None)?;
            args.model.apply(&mut cfg)?;
            let model = cfg.model.kind.unwrap_or(ModelKind::Svm);
            let opts = TrainEvalOptions {
                train: args.train.clone(),
                tests: args.tests.clone(),
                model,
                spec: cfg.model.clone(),
                seed: cfg.seeds.plan().model,
            };
            let report = experiment::train_eval(&opts)?;
            let path = args.output.clone().unwrap_or_else(|| cli.out_dir.join("train_eval.json"));
            mechlearn::io::write_json(&path, &report.results)?;
            match cli.format {
                Format::Json => print_json(serde_json::to_value(&report.results)?)?,
                Format::Table => {
                    let w = report.results.keys().map(String::len).max().unwrap_or(0);
                    for (name, r) in &report.results {
                        println!("{name:<w$}  {:?}  {:.4}  n={}", r.metric, r.value, r.n_test);
                    }
                    println!("report: {}", path.display());
                }
                Format::Csv => {
                    println!("test_file,metric,value,n_test");
                    for (name, r) in &report.results {
                        println!("{name},{:?},{},{}", r.metric, r.value, r.n_test);
                    }
                }
            }
        }
        Command::Reproduce(args) => {
            let mut cfg = base_config(cli, args.data.experiment.as_deref())?;
            apply_data(&mut cfg, &args.data);
            if let Some(r) = args.repeats {
                cfg.repeats = r;
            }
            args.model.apply(&mut cfg)?;
            args.density.apply(&mut cfg);
            if let Some(p) = args.policy.spec()? {
                cfg.policy = Some(p);
            }
            let rep = experiment::reproduce(&cfg)?;
            let out_dir = cli.out_dir.join(cfg.experiment.name());
            experiment::write_reproduction(&out_dir, &rep)?;
            write_config(&out_dir, &cfg)?;
            match cli.format {
                Format::Json => print!("{}", rep.table.to_json()),
                Format::Table => print!("{}", rep.table.to_text()),
                Format::Csv => print!("{}", rep.table.to_csv()),
            }
        }
    }
    Ok(())
}

/// Effective config next to the results, so a run can be repeated with `--config`.
fn write_config(out_dir: &Path, cfg: &ExperimentConfig) -> Result<(), Error> {
    let path = out_dir.join("config.toml");
    std::fs::write(&path, cfg.to_toml()?).map_err(|e| Error::Io { path, source: e })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 1 })
        }
    }
}
