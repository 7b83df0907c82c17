//! Front-door causal bootstrapping: resample confounded observational data
//! into a deconfounded training set through an observed mechanism variable.

pub mod bootstrap;
pub mod data;
pub mod density;
pub mod error;
pub mod experiment;
pub mod io;
pub mod mnist;
pub mod models;
pub mod oracle;
pub mod rng;
pub mod scm;

pub use bootstrap::{compute_weights, resample, DeconfoundedDataset, FrontDoorBootstrap, InterventionPolicy, PolicyKind};
pub use data::{Matrix, ObservationalDataset, VarKind};
pub use density::{fit_conditional, ConditionalDensity, FitOptions, KernelSpec};
pub use error::{Error, Result};
