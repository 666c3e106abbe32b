//! Experiment harness: synthetic data generators, the task registry with
//! its metrics, clustering utilities, and the runner behind the CLI.

mod config;
mod generate;
mod kmeans;
mod metrics;
mod tasks;

pub use config::{
    ClassicalSpec, DataSpec, ExperimentConfig, MetricsReport, ModelSpec, OptimizerSpec,
    SplitSpec, TaskKind,
};
pub use generate::{gen_dynamic_edges, gen_graph_var, DynEdgesConfig, VarGenConfig};
pub use kmeans::kmeans;
pub use metrics::{accuracy, adjusted_rand_index, gaussian_nll, mse, roc_auc};
pub use tasks::{
    chronological_split, classical_forecast_rows, eval_task, metrics_csv_bytes, resolve_data,
    run_task, tgnn_forecast_rows, RegressionCell, Split,
};
