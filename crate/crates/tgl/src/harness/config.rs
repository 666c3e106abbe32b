//! Experiment configuration, the metrics report, and their file formats.
//!
//! Configs are JSON, metrics land in a small key/value CSV, and every run
//! is identified by the SHA-256 of its canonical config serialization.
//! Everything written to the metrics CSV is deterministic under a fixed
//! seed; wall-clock time lives only in the report structure.

use crate::tgnn::TgnnSpec;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::Digest;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

/// The supported learning tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    NodeRegression,
    EdgeRegression,
    NodeClassification,
    GraphClassification,
    LinkPrediction,
    NodeClustering,
    GraphClustering,
    Lde,
}

impl TaskKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TaskKind::NodeRegression => "node_regression",
            TaskKind::EdgeRegression => "edge_regression",
            TaskKind::NodeClassification => "node_classification",
            TaskKind::GraphClassification => "graph_classification",
            TaskKind::LinkPrediction => "link_prediction",
            TaskKind::NodeClustering => "node_clustering",
            TaskKind::GraphClustering => "graph_clustering",
            TaskKind::Lde => "lde",
        }
    }
}

/// Classical baseline/model choices.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassicalSpec {
    /// Independent per-node ARIMA models (edges ignored).
    Arima { p: usize, d: usize, q: usize },
    /// One VAR over the stacked node signal.
    Var { p: usize },
    /// Per-node random-walk Kalman filter.
    Kalman { process_noise: f64, observation_noise: f64 },
}

/// What model a task runs.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelSpec {
    Tgnn(TgnnSpec),
    Classical(ClassicalSpec),
    /// Graph autoencoder (clustering and embedding tasks).
    Gae {
        hidden_dim: usize,
        latent_dim: usize,
    },
}

/// Where the data comes from.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSpec {
    Path { path: PathBuf },
    Var {
        n: usize,
        t: usize,
        #[serde(default = "default_edge_probability")]
        p_edge: f64,
        #[serde(default = "default_rho")]
        rho: f64,
        #[serde(default = "default_sigma")]
        sigma: f64,
        #[serde(default = "default_feature_dim")]
        features: usize,
        #[serde(default = "default_clusters")]
        clusters: usize,
    },
    DynEdges {
        n: usize,
        t: usize,
        #[serde(default = "default_flip_rate")]
        flip_rate: f64,
    },
}

fn default_edge_probability() -> f64 {
    0.3
}
fn default_rho() -> f64 {
    0.6
}
fn default_sigma() -> f64 {
    0.1
}
fn default_feature_dim() -> usize {
    1
}
fn default_clusters() -> usize {
    1
}
fn default_flip_rate() -> f64 {
    0.05
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train: 0.7,
            val: 0.1,
            test: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct OptimizerSpec {
    pub learning_rate: f64,
    pub epochs: usize,
}

impl Default for OptimizerSpec {
    fn default() -> Self {
        OptimizerSpec {
            learning_rate: 0.01,
            epochs: 30,
        }
    }
}

fn default_window() -> usize {
    0 // resolved to horizon + 1 at validation time
}
fn default_horizon() -> usize {
    1
}
fn default_cluster_count() -> usize {
    2
}

/// One experiment, fully specified. A fixed seed makes the whole run,
/// including every metrics byte, reproducible.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ExperimentConfig {
    pub task: TaskKind,
    pub model: ModelSpec,
    pub data: DataSpec,
    /// Input window length; 0 means `horizon + 1`.
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default)]
    pub split: SplitSpec,
    pub seed: u64,
    #[serde(default)]
    pub optimizer: OptimizerSpec,
    /// Cluster count for the clustering tasks.
    #[serde(default = "default_cluster_count")]
    pub clusters: usize,
    /// Metrics CSV destination.
    pub metrics_out: PathBuf,
    /// Checkpoint destination for trainable models.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_out: Option<PathBuf>,
    /// Embedding CSV destination (`lde` task).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings_out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let total = self.split.train + self.split.val + self.split.test;
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split fractions sum to {total}, expected 1"
            )));
        }
        if self.split.train <= 0.0 || self.split.test <= 0.0 {
            return Err(Error::Config(
                "train and test fractions must be positive".into(),
            ));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be >= 1".into()));
        }
        if self.clusters == 0 {
            return Err(Error::Config("cluster count must be >= 1".into()));
        }
        Ok(())
    }

    /// Window length with the `horizon + 1` default applied.
    pub fn effective_window(&self) -> usize {
        if self.window == 0 {
            self.horizon + 1
        } else {
            self.window
        }
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = sha2::Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Outcome of one run: training trace, final metrics, and provenance.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub task: String,
    pub seed: u64,
    pub config_hash: String,
    pub epoch_losses: Vec<f64>,
    pub final_metrics: BTreeMap<String, f64>,
    /// Not written to the metrics CSV (it would break byte-level
    /// reproducibility).
    pub wall_clock_seconds: f64,
}

impl MetricsReport {
    pub fn new(task: TaskKind, seed: u64, config_hash: String) -> Self {
        MetricsReport {
            task: task.as_str().to_string(),
            seed,
            config_hash,
            epoch_losses: Vec::new(),
            final_metrics: BTreeMap::new(),
            wall_clock_seconds: 0.0,
        }
    }

    /// Deterministic key/value CSV: meta rows, one row per epoch loss, one
    /// row per final metric. Wall-clock time is deliberately excluded.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "section,key,value")?;
        writeln!(w, "meta,task,{}", self.task)?;
        writeln!(w, "meta,seed,{}", self.seed)?;
        writeln!(w, "meta,config_hash,{}", self.config_hash)?;
        for (i, loss) in self.epoch_losses.iter().enumerate() {
            writeln!(w, "epoch,{i},{loss}")?;
        }
        for (name, value) in &self.final_metrics {
            writeln!(w, "final,{name},{value}")?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        let file = std::fs::File::create(path)?;
        self.write_csv(file)
    }
}
