//! Synthetic temporal-graph generators.
//!
//! Both generators are fully deterministic under a fixed seed. Snapshot
//! materialisation (allocating feature matrices and snapshot structs) is
//! farmed out to a small worker pool capped by the `TGL_THREADS`
//! environment variable; the random draws themselves happen up front on a
//! single thread, so the thread count never changes the output.

use crate::{Error, GraphSnapshot, Matrix, Result, TemporalGraph};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Settings for the diffusion-driven feature generator.
#[derive(Debug, Clone)]
pub struct VarGenConfig {
    pub nodes: usize,
    pub steps: usize,
    pub edge_probability: f64,
    /// Diffusion strength `rho`; the signal recursion is
    /// `X_{t+1} = rho * Anorm * X_t + noise` and `|rho| < 1` keeps it
    /// stable because the normalized adjacency has spectral radius <= 1.
    pub rho: f64,
    pub noise_sigma: f64,
    pub feature_dim: usize,
    /// Number of planted node groups; groups get offset signal means and
    /// become the node class labels.
    pub clusters: usize,
    pub seed: u64,
}

impl Default for VarGenConfig {
    fn default() -> Self {
        VarGenConfig {
            nodes: 20,
            steps: 100,
            edge_probability: 0.3,
            rho: 0.6,
            noise_sigma: 0.1,
            feature_dim: 1,
            clusters: 1,
            seed: 0,
        }
    }
}

/// Worker cap for snapshot materialisation: `TGL_THREADS` when set,
/// otherwise 1 (generation is cheap; parallelism is opt-in).
fn worker_cap() -> usize {
    std::env::var("TGL_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&v| v >= 1)
        .unwrap_or(1)
}

/// Map a builder over indexed inputs with at most `workers` threads,
/// preserving order. The builder must be pure.
fn build_snapshots<T: Send, F>(inputs: Vec<T>, workers: usize, f: F) -> Vec<GraphSnapshot>
where
    F: Fn(T) -> GraphSnapshot + Sync,
{
    if workers <= 1 || inputs.len() <= 1 {
        return inputs.into_iter().map(f).collect();
    }
    let chunk = inputs.len().div_ceil(workers);
    let mut slots: Vec<Option<GraphSnapshot>> = Vec::new();
    slots.resize_with(inputs.len(), || None);
    let f = &f;
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        let mut rest: Vec<(usize, T)> = inputs.into_iter().enumerate().collect();
        while !rest.is_empty() {
            let take = chunk.min(rest.len());
            let batch: Vec<(usize, T)> = rest.drain(..take).collect();
            handles.push(scope.spawn(move || {
                batch
                    .into_iter()
                    .map(|(i, input)| (i, f(input)))
                    .collect::<Vec<_>>()
            }));
        }
        for handle in handles {
            for (i, snap) in handle.join().expect("builder worker panicked") {
                slots[i] = Some(snap);
            }
        }
    });
    slots.into_iter().map(|s| s.expect("slot filled")).collect()
}

/// A fixed random graph whose node signals diffuse along the edges:
/// `X_{t+1} = rho * Anorm * X_t + sigma * eps` per feature channel, where
/// `Anorm` is the self-looped renormalized adjacency
/// `(D + I)^{-1/2} (A + I) (D + I)^{-1/2}` (spectral radius exactly one, so
/// `|rho| < 1` is exactly the stability condition). Planted group offsets
/// are added on top. Edges are constant over time; edge features carry the
/// running mean of the endpoint signals; labels are the planted groups
/// (`y`), the sign of the mean signal (`g`) and the sign of the edge
/// feature (`z`).
pub fn gen_graph_var(config: &VarGenConfig) -> Result<TemporalGraph> {
    let n = config.nodes;
    if n == 0 || config.steps == 0 || config.feature_dim == 0 || config.clusters == 0 {
        return Err(Error::Config(
            "generator needs nodes, steps, features and clusters >= 1".into(),
        ));
    }
    if !(0.0..=1.0).contains(&config.edge_probability) {
        return Err(Error::Config("edge probability must lie in [0, 1]".into()));
    }
    if config.rho.abs() >= 1.0 {
        return Err(Error::Numeric(format!(
            "diffusion strength {} is unstable; |rho| must be < 1",
            config.rho
        )));
    }
    if config.noise_sigma < 0.0 {
        return Err(Error::Config("noise sigma must be non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    // fixed edge set
    let mut edges: Vec<(u64, u64)> = Vec::new();
    for u in 1..=n as u64 {
        for v in (u + 1)..=n as u64 {
            if rng.random_range(0.0..1.0) < config.edge_probability {
                edges.push((u, v));
            }
        }
    }
    let template =
        GraphSnapshot::new(0.0, (1..=n as u64).collect(), edges.clone(), None, None, false)?;
    let a = template.adjacency(false, 0)?;
    let norm = normalized_adjacency(&a);

    // planted group offsets, evenly spread around zero
    let group_of = |v: usize| v % config.clusters;
    let offset_of = |g: usize| {
        if config.clusters == 1 {
            0.0
        } else {
            (g as f64 - (config.clusters - 1) as f64 / 2.0) * 2.0
        }
    };

    // simulate the centred signal, one channel at a time
    let d = config.feature_dim;
    let mut signal = Matrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut per_step: Vec<Matrix> = Vec::with_capacity(config.steps);
    for _ in 0..config.steps {
        per_step.push(signal.clone());
        let mixed = norm.matmul(&signal)?.scale(config.rho);
        signal = Matrix::from_fn(n, d, |i, j| {
            mixed.get(i, j) + config.noise_sigma * rng.sample::<f64, _>(StandardNormal)
        });
    }

    // materialise snapshots (pure per-step work)
    let labels: Vec<i64> = (0..n).map(|v| group_of(v) as i64).collect();
    let inputs: Vec<(usize, Matrix)> = per_step.into_iter().enumerate().collect();
    let edges_ref = &edges;
    let labels_ref = &labels;
    let snapshots = build_snapshots(inputs, worker_cap(), move |(t, centred)| {
        let x = Matrix::from_fn(n, d, |i, j| centred.get(i, j) + offset_of(group_of(i)));
        let mean_feature =
            |v: usize| -> f64 { (0..d).map(|j| x.get(v, j)).sum::<f64>() / d as f64 };
        let w_rows: Vec<Vec<f64>> = edges_ref
            .iter()
            .map(|&(u, v)| vec![0.5 * (mean_feature(u as usize - 1) + mean_feature(v as usize - 1))])
            .collect();
        let z: Vec<i64> = w_rows.iter().map(|r| i64::from(r[0] > 0.0)).collect();
        let total: f64 = (0..n).map(mean_feature).sum::<f64>() / n as f64;
        let w = Matrix::from_rows(&w_rows).expect("edge rows are rectangular");
        GraphSnapshot::new(
            t as f64,
            (1..=n as u64).collect(),
            edges_ref.clone(),
            Some(x),
            (!edges_ref.is_empty()).then_some(w),
            false,
        )
        .expect("generator invariants hold")
        .with_node_classes(labels_ref.clone())
        .expect("label count matches")
        .with_edge_classes(z)
        .expect("edge label count matches")
        .with_graph_class(i64::from(total > 0.0))
    });
    TemporalGraph::new(snapshots)
}

/// Self-looped renormalized adjacency
/// `(D + I)^{-1/2} (A + I) (D + I)^{-1/2}`; row-stochastic-like smoothing
/// with spectral radius exactly one.
fn normalized_adjacency(a: &Matrix) -> Matrix {
    let degrees = a.col_sums();
    let inv_sqrt: Vec<f64> = degrees.iter().map(|&d| 1.0 / (d + 1.0).sqrt()).collect();
    Matrix::from_fn(a.rows(), a.cols(), |i, j| {
        let aug = a.get(i, j) + if i == j { 1.0 } else { 0.0 };
        inv_sqrt[i] * aug * inv_sqrt[j]
    })
}

/// Settings for the edge-toggling generator.
#[derive(Debug, Clone)]
pub struct DynEdgesConfig {
    pub nodes: usize,
    pub steps: usize,
    /// Per-pair toggle probability per step.
    pub flip_rate: f64,
    pub seed: u64,
}

impl Default for DynEdgesConfig {
    fn default() -> Self {
        DynEdgesConfig {
            nodes: 12,
            steps: 80,
            flip_rate: 0.05,
            seed: 0,
        }
    }
}

/// Edges toggle independently with probability `flip_rate` each step,
/// starting from a half-density random graph. Node features carry the
/// normalised degree so link-prediction models have an input signal.
pub fn gen_dynamic_edges(config: &DynEdgesConfig) -> Result<TemporalGraph> {
    let n = config.nodes;
    if n < 2 || config.steps == 0 {
        return Err(Error::Config("generator needs nodes >= 2 and steps >= 1".into()));
    }
    if !(0.0..=1.0).contains(&config.flip_rate) {
        return Err(Error::Config("flip rate must lie in [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let pairs: Vec<(u64, u64)> = (1..=n as u64)
        .flat_map(|u| ((u + 1)..=n as u64).map(move |v| (u, v)))
        .collect();
    let mut present: Vec<bool> = pairs.iter().map(|_| rng.random_range(0.0..1.0) < 0.5).collect();

    let mut edge_sets: Vec<Vec<(u64, u64)>> = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        if step > 0 {
            for slot in present.iter_mut() {
                if rng.random_range(0.0..1.0) < config.flip_rate {
                    *slot = !*slot;
                }
            }
        }
        edge_sets.push(
            pairs
                .iter()
                .zip(&present)
                .filter(|(_, &keep)| keep)
                .map(|(&e, _)| e)
                .collect(),
        );
    }

    let inputs: Vec<(usize, Vec<(u64, u64)>)> = edge_sets.into_iter().enumerate().collect();
    let snapshots = build_snapshots(inputs, worker_cap(), move |(t, edges)| {
        let mut degree = vec![0usize; n];
        for &(u, v) in &edges {
            degree[u as usize - 1] += 1;
            degree[v as usize - 1] += 1;
        }
        let x = Matrix::from_fn(n, 1, |i, _| degree[i] as f64 / (n - 1) as f64);
        GraphSnapshot::new(
            t as f64,
            (1..=n as u64).collect(),
            edges,
            Some(x),
            None,
            false,
        )
        .expect("generator invariants hold")
    });
    TemporalGraph::new(snapshots)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn var_generation_is_deterministic() {
        let config = VarGenConfig {
            nodes: 8,
            steps: 20,
            seed: 3,
            ..VarGenConfig::default()
        };
        let a = gen_graph_var(&config).unwrap();
        let b = gen_graph_var(&config).unwrap();
        assert_eq!(a.len(), b.len());
        for (sa, sb) in a.snapshots().iter().zip(b.snapshots()) {
            assert_eq!(sa.edges(), sb.edges());
            assert_eq!(
                sa.node_features().unwrap().data(),
                sb.node_features().unwrap().data()
            );
        }
    }

    #[test]
    fn zero_noise_is_pure_diffusion() {
        let config = VarGenConfig {
            nodes: 6,
            steps: 10,
            noise_sigma: 0.0,
            seed: 5,
            ..VarGenConfig::default()
        };
        let tg = gen_graph_var(&config).unwrap();
        // bit-exact reproducibility
        let tg2 = gen_graph_var(&config).unwrap();
        for (a, b) in tg.snapshots().iter().zip(tg2.snapshots()) {
            assert_eq!(
                a.node_features().unwrap().data(),
                b.node_features().unwrap().data()
            );
        }
    }

    #[test]
    fn zero_rho_gives_uncorrelated_steps() {
        let config = VarGenConfig {
            nodes: 4,
            steps: 5,
            rho: 0.0,
            noise_sigma: 1.0,
            seed: 7,
            ..VarGenConfig::default()
        };
        let tg = gen_graph_var(&config).unwrap();
        // with rho = 0 the diffusion term vanishes: each step is fresh noise,
        // so consecutive steps differ everywhere
        let x0 = tg.get(1).unwrap().node_features().unwrap().clone();
        let x1 = tg.get(2).unwrap().node_features().unwrap().clone();
        assert!(x0.data().iter().zip(x1.data()).all(|(a, b)| a != b));
    }

    #[test]
    fn unstable_rho_rejected() {
        let config = VarGenConfig {
            rho: 1.0,
            ..VarGenConfig::default()
        };
        assert!(matches!(gen_graph_var(&config), Err(Error::Numeric(_))));
    }

    #[test]
    fn adjacent_nodes_correlate_more_than_distant_ones() {
        // averaged over seeds, diffusion couples neighbours
        let mut adjacent_total = 0.0;
        let mut distant_total = 0.0;
        let mut counts = (0usize, 0usize);
        for seed in 0..20 {
            let config = VarGenConfig {
                nodes: 10,
                steps: 150,
                edge_probability: 0.25,
                rho: 0.8,
                noise_sigma: 0.3,
                seed,
                ..VarGenConfig::default()
            };
            let tg = gen_graph_var(&config).unwrap();
            let series: Vec<Vec<f64>> = (0..10)
                .map(|v| {
                    tg.snapshots()
                        .iter()
                        .map(|s| s.node_features().unwrap().get(v, 0))
                        .collect()
                })
                .collect();
            let corr = |a: &[f64], b: &[f64]| -> f64 {
                let n = a.len() as f64;
                let (ma, mb) = (
                    a.iter().sum::<f64>() / n,
                    b.iter().sum::<f64>() / n,
                );
                let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
                let va: f64 = a.iter().map(|x| (x - ma) * (x - ma)).sum();
                let vb: f64 = b.iter().map(|y| (y - mb) * (y - mb)).sum();
                cov / (va.sqrt() * vb.sqrt()).max(1e-12)
            };
            let first = tg.get(0).unwrap();
            for u in 0..10usize {
                for v in (u + 1)..10 {
                    let c = corr(&series[u], &series[v]);
                    if first.has_edge(u as u64 + 1, v as u64 + 1) {
                        adjacent_total += c;
                        counts.0 += 1;
                    } else {
                        distant_total += c;
                        counts.1 += 1;
                    }
                }
            }
        }
        let adj_mean = adjacent_total / counts.0 as f64;
        let dist_mean = distant_total / counts.1 as f64;
        assert!(
            adj_mean > dist_mean + 0.05,
            "no correlation gap: adjacent {adj_mean:.3} vs distant {dist_mean:.3}"
        );
    }

    #[test]
    fn flip_rate_zero_keeps_edges_static() {
        let config = DynEdgesConfig {
            nodes: 8,
            steps: 10,
            flip_rate: 0.0,
            seed: 1,
        };
        let tg = gen_dynamic_edges(&config).unwrap();
        let first = tg.get(0).unwrap().edges().to_vec();
        for snap in tg.snapshots() {
            assert_eq!(snap.edges(), first.as_slice());
        }
    }

    #[test]
    fn flip_rate_one_toggles_every_pair() {
        let config = DynEdgesConfig {
            nodes: 6,
            steps: 4,
            flip_rate: 1.0,
            seed: 2,
        };
        let tg = gen_dynamic_edges(&config).unwrap();
        for window in tg.snapshots().windows(2) {
            let before: std::collections::HashSet<_> = window[0].edges().iter().collect();
            let after: std::collections::HashSet<_> = window[1].edges().iter().collect();
            // every pair flips state: the edge sets are exact complements
            assert!(before.is_disjoint(&after));
            assert_eq!(before.len() + after.len(), 6 * 5 / 2);
        }
    }

    #[test]
    fn expected_flip_count_matches_binomial() {
        let n = 14usize;
        let pairs = n * (n - 1) / 2;
        let rate = 0.2;
        let mut flips = 0usize;
        let mut transitions = 0usize;
        for seed in 0..30 {
            let tg = gen_dynamic_edges(&DynEdgesConfig {
                nodes: n,
                steps: 30,
                flip_rate: rate,
                seed,
            })
            .unwrap();
            for window in tg.snapshots().windows(2) {
                let before: std::collections::HashSet<_> =
                    window[0].edges().iter().copied().collect();
                let after: std::collections::HashSet<_> =
                    window[1].edges().iter().copied().collect();
                flips += before.symmetric_difference(&after).count();
                transitions += 1;
            }
        }
        let mean = flips as f64 / transitions as f64;
        let expect = rate * pairs as f64;
        let sigma = (pairs as f64 * rate * (1.0 - rate)).sqrt()
            / (transitions as f64).sqrt();
        assert!(
            (mean - expect).abs() < 3.0 * sigma,
            "mean flips {mean:.2} vs expected {expect:.2} +- {:.2}",
            3.0 * sigma
        );
    }

    #[test]
    fn worker_pool_does_not_change_the_output() {
        let config = VarGenConfig {
            nodes: 6,
            steps: 12,
            seed: 11,
            ..VarGenConfig::default()
        };
        let base = gen_graph_var(&config).unwrap();
        std::env::set_var("TGL_THREADS", "3");
        let pooled = gen_graph_var(&config).unwrap();
        std::env::remove_var("TGL_THREADS");
        for (a, b) in base.snapshots().iter().zip(pooled.snapshots()) {
            assert_eq!(a.edges(), b.edges());
            assert_eq!(
                a.node_features().unwrap().data(),
                b.node_features().unwrap().data()
            );
        }
    }
}
