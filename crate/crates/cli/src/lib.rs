//! Config-driven experiment runner: training, evaluation, ablation grids,
//! estimator oracles and dataset generation.

pub mod ablate;
pub mod config;
pub mod data;
pub mod evaluate;
pub mod oracle;
pub mod plot;
pub mod train;

pub use ablate::{cmd_ablate, AblationKind, SummaryRow};
pub use config::{ExperimentConfig, SCHEMA_VERSION};
pub use evaluate::{cmd_evaluate, evaluate_module, EvalModel, Evaluation};
pub use oracle::{cmd_oracle, OracleOptions, OracleReport};
pub use train::{cmd_train, TrainOutcome};
