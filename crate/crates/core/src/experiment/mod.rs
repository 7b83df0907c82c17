//! Experiment configuration, the benchmark pipeline and the file-level commands.

mod commands;
mod config;
mod learner;
mod pipeline;
mod results;

pub use commands::{
    deconfound, diagnostics_path_for, train_eval, DeconfoundOptions, DeconfoundReport, TrainEvalOptions,
    TrainEvalRecord, TrainEvalReport,
};
pub use config::{
    DensitySpec, ExperimentConfig, ExperimentKind, ModelKind, ModelSpec, PolicySpec, SeedPlan, Seeds, Sizes,
};
pub use learner::{Learner, TrainedModel};
pub use pipeline::{
    generate, matched_classical, reproduce, write_reproduction, DataSource, GenerateReport, GeneratedFile, PlotData,
    Reproduction, Split,
};
pub use results::{mean_std, CellValue, Metadata, RepeatRecord, ResultRow, ResultsTable, SummaryStat, TestSet};
