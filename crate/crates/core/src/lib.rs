//! Sequential model-based hyperparameter optimization.
//!
//! A [`SearchSpace`] describes the hyperparameters, an [`Objective`] scores
//! configurations, and [`run`] drives one of four optimizers (GP-based
//! Bayesian optimization, TPE, grid or random search) for a fixed budget,
//! recording every trial in a [`History`]. [`race`] repeats this across
//! optimizers and seeds; [`metrics`] turns the logs into reports.

pub mod acquisition;
pub mod config;
pub mod engine;
pub mod gp;
pub mod history;
pub mod metrics;
pub mod objective;
pub mod rundir;
pub mod seed;
pub mod sobol;
pub mod space;
pub mod tpe;

pub use acquisition::{AcquisitionKind, AcquisitionSpec};
pub use config::{ConfigError, LoadedConfig, RunConfig};
pub use engine::{race, race_jobs, run, EngineError, OptimizerKind, OptimizerSpec, RaceJob, RaceOutcome, RunOptions, RunResult};
pub use gp::{GpError, GpPosterior, KernelParams};
pub use history::{History, HistoryError, Trial, TrialLog, TrialStatus};
pub use metrics::{bca, efficiency, render_reports, threshold_times, ConfusionCounts, MetricsError, Report, RunRecord};
pub use objective::{Objective, ObjectiveError, ObjectiveRequest, ObjectiveResponse, ObjectiveSpec, ResponseStatus, SyntheticKind};
pub use rundir::{RunDirError, RunMeta};
pub use seed::SeedStream;
pub use space::{Config, ParamDef, ParamKind, ParamValue, SearchSpace, SpaceError};
