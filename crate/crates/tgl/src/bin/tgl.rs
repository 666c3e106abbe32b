//! Command-line interface for the temporal graph learning toolkit.
//!
//! Exit codes: 0 on success, 2 on configuration or input-format errors,
//! 3 on numeric failures.

use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use tgl::graph::{read_jsonl, write_jsonl};
use tgl::gsp::{build_basis, ShiftKind};
use tgl::harness::{
    classical_forecast_rows, eval_task, gen_dynamic_edges, gen_graph_var, run_task,
    tgnn_forecast_rows, ClassicalSpec, DynEdgesConfig, ExperimentConfig, VarGenConfig,
};
use tgl::{Error, Result};

#[derive(Parser)]
#[command(
    name = "tgl",
    about = "Temporal graph learning toolkit: synthetic data, spectral analysis, \
             temporal GNNs and classical forecasting baselines",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum GenerateKind {
    Var,
    DynEdges,
}

#[derive(Clone, Copy, ValueEnum)]
enum ForecastModel {
    Arima,
    Var,
    Kalman,
    Tgnn,
}

#[derive(Clone, Copy, ValueEnum)]
enum ShiftArg {
    Adj,
    Lap,
    Nlap,
}

impl From<ShiftArg> for ShiftKind {
    fn from(value: ShiftArg) -> Self {
        match value {
            ShiftArg::Adj => ShiftKind::Adjacency,
            ShiftArg::Lap => ShiftKind::Laplacian,
            ShiftArg::Nlap => ShiftKind::NormalizedLaplacian,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic temporal graph and write it as JSONL.
    Generate {
        #[arg(long, value_enum)]
        kind: GenerateKind,
        /// Node count.
        #[arg(long)]
        n: usize,
        /// Number of snapshots.
        #[arg(long)]
        t: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Edge probability of the fixed graph (var kind).
        #[arg(long, default_value_t = 0.3)]
        p_edge: f64,
        /// Diffusion strength; |rho| < 1 (var kind).
        #[arg(long, default_value_t = 0.6)]
        rho: f64,
        /// Innovation noise level (var kind).
        #[arg(long, default_value_t = 0.1)]
        sigma: f64,
        /// Feature channels per node (var kind).
        #[arg(long, default_value_t = 1)]
        features: usize,
        /// Planted node groups (var kind).
        #[arg(long, default_value_t = 1)]
        clusters: usize,
        /// Per-pair toggle probability per step (dyn-edges kind).
        #[arg(long, default_value_t = 0.05)]
        flip_rate: f64,
    },
    /// Train the configured model and write metrics plus a checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate a trained checkpoint on the config's test split.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Forecast node signals tau steps past the end of a chain.
    Forecast {
        #[arg(long, value_enum)]
        model: ForecastModel,
        /// Look-ahead horizon.
        #[arg(long, default_value_t = 1)]
        tau: usize,
        /// Input JSONL chain (classical models).
        #[arg(long)]
        input: Option<PathBuf>,
        /// Experiment config (tgnn model).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Trained checkpoint (tgnn model).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Autoregressive order (arima/var).
        #[arg(long, default_value_t = 1)]
        p: usize,
        /// Differencing order (arima).
        #[arg(long, default_value_t = 0)]
        d: usize,
        /// Moving-average order (arima).
        #[arg(long, default_value_t = 0)]
        q: usize,
        /// Process noise (kalman).
        #[arg(long, default_value_t = 0.01)]
        process_noise: f64,
        /// Observation noise (kalman).
        #[arg(long, default_value_t = 0.1)]
        observation_noise: f64,
    },
    /// Eigendecompose a snapshot's shift operator and dump it as CSV.
    Spectrum {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        shift: ShiftArg,
        /// Snapshot index within the chain.
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a graph autoencoder per the config and write one embedding
    /// row per snapshot.
    Embed {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate {
            kind,
            n,
            t,
            seed,
            out,
            p_edge,
            rho,
            sigma,
            features,
            clusters,
            flip_rate,
        } => {
            let tg = match kind {
                GenerateKind::Var => gen_graph_var(&VarGenConfig {
                    nodes: n,
                    steps: t,
                    edge_probability: p_edge,
                    rho,
                    noise_sigma: sigma,
                    feature_dim: features,
                    clusters,
                    seed,
                })?,
                GenerateKind::DynEdges => gen_dynamic_edges(&DynEdgesConfig {
                    nodes: n,
                    steps: t,
                    flip_rate,
                    seed,
                })?,
            };
            write_jsonl(&tg, &out)?;
            eprintln!("wrote {} snapshots to {}", tg.len(), out.display());
        }
        Command::Train { config } => {
            let config = ExperimentConfig::from_file(&config)?;
            let report = run_task(&config)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Eval { config, checkpoint } => {
            let config = ExperimentConfig::from_file(&config)?;
            let report = eval_task(&config, &checkpoint)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Forecast {
            model,
            tau,
            input,
            config,
            checkpoint,
            out,
            p,
            d,
            q,
            process_noise,
            observation_noise,
        } => {
            if tau == 0 {
                return Err(Error::Config("tau must be >= 1".into()));
            }
            let rows = match model {
                ForecastModel::Tgnn => {
                    let config_path = config.ok_or_else(|| {
                        Error::Config("tgnn forecasting needs --config".into())
                    })?;
                    let checkpoint = checkpoint.ok_or_else(|| {
                        Error::Config("tgnn forecasting needs --checkpoint".into())
                    })?;
                    let config = ExperimentConfig::from_file(&config_path)?;
                    tgnn_forecast_rows(&config, &checkpoint, tau)?
                }
                classical => {
                    let input = input.ok_or_else(|| {
                        Error::Config("classical forecasting needs --input".into())
                    })?;
                    let tg = read_jsonl(&input)?;
                    let spec = match classical {
                        ForecastModel::Arima => ClassicalSpec::Arima { p, d, q },
                        ForecastModel::Var => ClassicalSpec::Var { p },
                        ForecastModel::Kalman => ClassicalSpec::Kalman {
                            process_noise,
                            observation_noise,
                        },
                        ForecastModel::Tgnn => unreachable!(),
                    };
                    classical_forecast_rows(&tg, &spec, tau)?
                }
            };
            let mut text = String::from("node,channel,value\n");
            for (node, channel, value) in rows {
                text.push_str(&format!("{node},{channel},{value}\n"));
            }
            match out {
                Some(path) => std::fs::write(path, text)?,
                None => print!("{text}"),
            }
        }
        Command::Spectrum {
            input,
            shift,
            index,
            out,
        } => {
            let tg = read_jsonl(&input)?;
            let snap = tg.get(index).ok_or_else(|| {
                Error::Config(format!(
                    "snapshot index {index} out of range ({} snapshots)",
                    tg.len()
                ))
            })?;
            let basis = build_basis(&snap.adjacency(false, 0)?, shift.into())?;
            let n = basis.len();
            let mut text = String::from("eigenvalue");
            for i in 0..n {
                text.push_str(&format!(",v{i}"));
            }
            text.push('\n');
            for k in 0..n {
                text.push_str(&format!("{}", basis.eigenvalues[k]));
                let column = basis.eigenvectors.column(k);
                for v in column {
                    text.push_str(&format!(",{v}"));
                }
                text.push('\n');
            }
            std::fs::write(out, text)?;
        }
        Command::Embed { config, out } => {
            let mut config = ExperimentConfig::from_file(&config)?;
            config.task = tgl::harness::TaskKind::Lde;
            config.embeddings_out = Some(out);
            let report = run_task(&config)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
