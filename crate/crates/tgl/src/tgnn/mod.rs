//! Temporal graph neural networks: a spatial layer stack composed with a
//! temporal unit, under either evolution regime.
//!
//! *Embedding evolution* runs the spatial stack over every snapshot in a
//! window and carries node representations through the temporal unit.
//! *Model evolution* keeps the representation map fixed per snapshot but
//! evolves the flattened spatial parameters with a parameter-space GRU and
//! reads the final snapshot through the evolved weights.
//!
//! Windows are aligned over the union of node ids they touch: nodes absent
//! from a snapshot get zero features and no edges, so recurrent state rows
//! stay consistent while the node set drifts.

mod checkpoint;
mod heads;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest};
pub use heads::{
    cross_entropy_loss, gaussian_nll_loss, link_bce_loss, mse_loss, Head, HeadSpec,
};

use crate::gnn::{
    diffusion_conv, gat_layer, gated_gnn_init, gated_gnn_step, gcn_layer, gin_step, mpnn_step,
    DiffusionMode, GraphEsn, Mlp, NeighborCap,
};
use crate::graph::{aligned_adjacency, aligned_features, aligned_node_ids};
use crate::gsp::chebyshev_signals;
use crate::optim::{glorot, ParamSet, ParamView};
use crate::seq::{positional_encoding, sdpa, GruCell, LstmCell};
use crate::tensor::{Activation, Tensor};
use crate::{symmetric_eig, Error, GraphSnapshot, Matrix, Result, TemporalGraph};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Serializable description of one spatial layer.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GnnLayerSpec {
    Gcn { width: usize },
    Chebnet { width: usize, order: usize },
    DiffusionConcat { steps: usize },
    DiffusionSum { width: usize, steps: usize },
    Mpnn { width: usize, hidden: usize, #[serde(default)] sample_cap: Option<usize> },
    Gin { width: usize, hidden: usize, #[serde(default)] sample_cap: Option<usize> },
    Gat { width: usize, #[serde(default)] sample_cap: Option<usize> },
    GatedGnn { width: usize, iterations: usize },
    GraphEsn { width: usize, scale: f64, iterations: usize },
}

/// Serializable description of the temporal unit.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TemporalSpec {
    Gru,
    Lstm,
    Tcn { kernel: usize },
    Attention,
}

/// Whether representations or parameters carry the temporal state.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "snake_case")]
pub enum EvolutionKind {
    #[default]
    Embedding,
    Model,
}

/// Full serializable model description.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TgnnSpec {
    pub input_dim: usize,
    pub spatial: Vec<GnnLayerSpec>,
    pub temporal: TemporalSpec,
    #[serde(default)]
    pub evolution: EvolutionKind,
}

impl TgnnSpec {
    /// The default architecture: two GCN layers under a GRU.
    pub fn default_gcn_gru(input_dim: usize, width: usize) -> Self {
        TgnnSpec {
            input_dim,
            spatial: vec![
                GnnLayerSpec::Gcn { width },
                GnnLayerSpec::Gcn { width },
            ],
            temporal: TemporalSpec::Gru,
            evolution: EvolutionKind::Embedding,
        }
    }
}

enum SpatialLayer {
    Gcn {
        theta: String,
    },
    Chebnet {
        thetas: Vec<String>,
    },
    DiffusionConcat {
        thetas: Vec<String>,
    },
    DiffusionSum {
        thetas: Vec<String>,
    },
    Mpnn {
        f: Mlp,
        g: Mlp,
        cap: Option<NeighborCap>,
    },
    Gin {
        eps: String,
        mlp: Mlp,
        cap: Option<NeighborCap>,
    },
    Gat {
        theta: String,
        attn: String,
        cap: Option<NeighborCap>,
    },
    GatedGnn {
        cell: GruCell,
        width: usize,
        iterations: usize,
    },
    GraphEsn {
        reservoir: GraphEsn,
        iterations: usize,
    },
}

struct BuiltLayer {
    layer: SpatialLayer,
    in_dim: usize,
    out_dim: usize,
    spec: GnnLayerSpec,
}

/// The spatial stack `f_S`: node features to node embeddings.
pub struct SpatialStack {
    layers: Vec<BuiltLayer>,
    pub input_dim: usize,
    pub output_dim: usize,
}

const ESN_SEED_BASE: u64 = 0x45534e; // reservoirs are deterministic per layer index

impl SpatialStack {
    pub fn build(input_dim: usize, specs: &[GnnLayerSpec]) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::Config("spatial stack cannot be empty".into()));
        }
        let mut layers = Vec::with_capacity(specs.len());
        let mut dim = input_dim;
        for (i, spec) in specs.iter().enumerate() {
            let prefix = format!("spatial.{i}");
            let cap_of = |q: &Option<usize>| {
                q.map(|q| NeighborCap {
                    q,
                    seed: ESN_SEED_BASE ^ i as u64,
                })
            };
            let (layer, out_dim) = match spec {
                GnnLayerSpec::Gcn { width } => {
                    (SpatialLayer::Gcn { theta: format!("{prefix}.theta") }, *width)
                }
                GnnLayerSpec::Chebnet { width, order } => {
                    let thetas = (0..=*order).map(|k| format!("{prefix}.theta{k}")).collect();
                    (SpatialLayer::Chebnet { thetas }, *width)
                }
                GnnLayerSpec::DiffusionConcat { steps } => {
                    if *steps == 0 {
                        return Err(Error::Config(
                            "diffusion concat needs at least one step".into(),
                        ));
                    }
                    let thetas = (1..=*steps).map(|k| format!("{prefix}.theta{k}")).collect();
                    (SpatialLayer::DiffusionConcat { thetas }, steps * dim)
                }
                GnnLayerSpec::DiffusionSum { width, steps } => {
                    let thetas = (0..=*steps).map(|k| format!("{prefix}.theta{k}")).collect();
                    (SpatialLayer::DiffusionSum { thetas }, *width)
                }
                GnnLayerSpec::Mpnn { width, hidden, sample_cap } => {
                    let f = Mlp::new(format!("{prefix}.f"), dim + *width, *hidden, *width);
                    let g = Mlp::new(format!("{prefix}.g"), 2 * dim + 1, *hidden, *width);
                    (SpatialLayer::Mpnn { f, g, cap: cap_of(sample_cap) }, *width)
                }
                GnnLayerSpec::Gin { width, hidden, sample_cap } => {
                    let mlp = Mlp::new(format!("{prefix}.mlp"), dim, *hidden, *width);
                    (
                        SpatialLayer::Gin {
                            eps: format!("{prefix}.eps"),
                            mlp,
                            cap: cap_of(sample_cap),
                        },
                        *width,
                    )
                }
                GnnLayerSpec::Gat { width, sample_cap } => (
                    SpatialLayer::Gat {
                        theta: format!("{prefix}.theta"),
                        attn: format!("{prefix}.a"),
                        cap: cap_of(sample_cap),
                    },
                    *width,
                ),
                GnnLayerSpec::GatedGnn { width, iterations } => {
                    if *width < dim {
                        return Err(Error::Config(format!(
                            "gated GNN width {width} below input dimension {dim}"
                        )));
                    }
                    let cell = GruCell::new(format!("{prefix}.gru"), *width, *width);
                    (
                        SpatialLayer::GatedGnn {
                            cell,
                            width: *width,
                            iterations: (*iterations).max(1),
                        },
                        *width,
                    )
                }
                GnnLayerSpec::GraphEsn { width, scale, iterations } => {
                    let reservoir = GraphEsn::new(dim, *width, *scale, ESN_SEED_BASE + i as u64)?;
                    (
                        SpatialLayer::GraphEsn {
                            reservoir,
                            iterations: (*iterations).max(1),
                        },
                        *width,
                    )
                }
            };
            layers.push(BuiltLayer {
                layer,
                in_dim: dim,
                out_dim,
                spec: spec.clone(),
            });
            dim = out_dim;
        }
        Ok(SpatialStack {
            input_dim,
            output_dim: dim,
            layers,
        })
    }

    pub fn init_params(&self, params: &mut ParamSet, rng: &mut ChaCha8Rng) {
        for built in &self.layers {
            match (&built.layer, &built.spec) {
                (SpatialLayer::Gcn { theta }, _) => {
                    params.insert(theta.clone(), glorot(rng, built.in_dim, built.out_dim));
                }
                (SpatialLayer::Chebnet { thetas }, _) => {
                    for name in thetas {
                        params.insert(name.clone(), glorot(rng, built.in_dim, built.out_dim));
                    }
                }
                (SpatialLayer::DiffusionConcat { thetas }, _) => {
                    for name in thetas {
                        params.insert(
                            name.clone(),
                            crate::optim::uniform_vector(rng, built.in_dim, 0.5),
                        );
                    }
                }
                (SpatialLayer::DiffusionSum { thetas }, _) => {
                    for name in thetas {
                        params.insert(name.clone(), glorot(rng, built.in_dim, built.out_dim));
                    }
                }
                (SpatialLayer::Mpnn { f, g, .. }, _) => {
                    f.init_params(params, rng);
                    g.init_params(params, rng);
                }
                (SpatialLayer::Gin { eps, mlp, .. }, _) => {
                    params.insert(eps.clone(), Tensor::scalar(0.0));
                    mlp.init_params(params, rng);
                }
                (SpatialLayer::Gat { theta, attn, .. }, _) => {
                    params.insert(theta.clone(), glorot(rng, built.in_dim, built.out_dim));
                    params.insert(
                        attn.clone(),
                        crate::optim::uniform_vector(rng, 2 * built.out_dim, 0.5),
                    );
                }
                (SpatialLayer::GatedGnn { cell, .. }, _) => {
                    cell.init_params(params, rng);
                }
                (SpatialLayer::GraphEsn { .. }, _) => {}
            }
        }
    }

    /// Run the stack on one snapshot (adjacency plus features).
    pub fn forward<P: ParamView>(&self, p: &P, a: &Matrix, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for built in &self.layers {
            h = match &built.layer {
                SpatialLayer::Gcn { theta } => {
                    gcn_layer(a, &h, p.param(theta), Activation::Tanh)?
                }
                SpatialLayer::Chebnet { thetas } => {
                    chebconv_multichannel(a, &h, thetas, p)?.tanh()
                }
                SpatialLayer::DiffusionConcat { thetas } => {
                    let t: Vec<Tensor> = thetas.iter().map(|n| p.param(n).clone()).collect();
                    diffusion_conv(a, &h, &t, DiffusionMode::Concat, Activation::Tanh)?
                }
                SpatialLayer::DiffusionSum { thetas } => {
                    let t: Vec<Tensor> = thetas.iter().map(|n| p.param(n).clone()).collect();
                    diffusion_conv(a, &h, &t, DiffusionMode::Sum, Activation::Tanh)?
                }
                SpatialLayer::Mpnn { f, g, cap } => mpnn_step(a, &h, f, g, p, *cap)?,
                SpatialLayer::Gin { eps, mlp, cap } => {
                    gin_step(a, &h, p.param(eps), mlp, p, *cap)?
                }
                SpatialLayer::Gat { theta, attn, cap } => {
                    gat_layer(a, &h, theta, attn, p, *cap)?
                }
                SpatialLayer::GatedGnn { cell, width, iterations } => {
                    let x_mat = h.to_matrix()?;
                    let mut state = gated_gnn_init(&x_mat, *width)?;
                    for _ in 0..*iterations {
                        state = gated_gnn_step(a, &state, cell, p)?;
                    }
                    state
                }
                SpatialLayer::GraphEsn { reservoir, iterations } => {
                    let x_mat = h.to_matrix()?;
                    let mut state = Matrix::zeros(x_mat.rows(), reservoir.reservoir_dim);
                    for _ in 0..*iterations {
                        state = reservoir.step(a, &x_mat, &state)?;
                    }
                    Tensor::from_matrix(&state)
                }
            };
        }
        Ok(h)
    }

    /// Sorted names and shapes of the stack's trainable parameters.
    pub fn template(&self, params: &ParamSet) -> Vec<(String, Vec<usize>)> {
        params
            .iter()
            .filter(|(name, _)| name.starts_with("spatial."))
            .map(|(name, t)| (name.to_string(), t.shape().to_vec()))
            .collect()
    }
}

/// Multichannel ChebNet convolution `sum_k T_k(rescaled shift) X Theta_k`
/// on the normalized Laplacian, with `lambda_max` from the computed
/// spectrum.
fn chebconv_multichannel<P: ParamView>(
    a: &Matrix,
    x: &Tensor,
    theta_names: &[String],
    p: &P,
) -> Result<Tensor> {
    let shift = crate::graph::normalized_laplacian(a)?;
    let eig = symmetric_eig(&shift)?;
    let lmax = eig.values.last().copied().unwrap_or(0.0);
    if lmax <= 0.0 {
        return Err(Error::Numeric(
            "lambda_max is zero; cannot rescale the shift".into(),
        ));
    }
    let n = shift.rows();
    let rescaled = Matrix::from_fn(n, n, |i, j| {
        let v = 2.0 * shift.get(i, j) / lmax;
        if i == j {
            v - 1.0
        } else {
            v
        }
    });
    // T_k applied column-by-column of X (plain data; differentiation flows
    // through the Theta_k weights)
    let [_, d] = x.shape() else {
        return Err(Error::ShapeMismatch("features must be rank 2".into()));
    };
    let order = theta_names.len() - 1;
    let mut per_order: Vec<Matrix> = vec![Matrix::zeros(n, *d); order + 1];
    for c in 0..*d {
        let col: Vec<f64> = (0..n).map(|i| x.data()[i * d + c]).collect();
        let signals = chebyshev_signals(&rescaled, order, &col)?;
        for (k, sig) in signals.iter().enumerate() {
            for (i, v) in sig.iter().enumerate() {
                per_order[k].set(i, c, *v);
            }
        }
    }
    let mut total: Option<Tensor> = None;
    for (k, name) in theta_names.iter().enumerate() {
        let term = Tensor::from_matrix(&per_order[k]).matmul(p.param(name))?;
        total = Some(match total {
            None => term,
            Some(acc) => acc.add(&term)?,
        });
    }
    Ok(total.expect("at least one coefficient"))
}

/// The temporal unit `f_T`, applied to a window of per-node embeddings.
pub struct TemporalLayer {
    spec: TemporalSpec,
    pub embed_dim: usize,
    gru: Option<GruCell>,
    lstm: Option<LstmCell>,
    tcn_taps: Vec<String>,
}

impl TemporalLayer {
    pub fn build(spec: &TemporalSpec, embed_dim: usize) -> Result<Self> {
        let mut layer = TemporalLayer {
            spec: spec.clone(),
            embed_dim,
            gru: None,
            lstm: None,
            tcn_taps: Vec::new(),
        };
        match spec {
            TemporalSpec::Gru => {
                layer.gru = Some(GruCell::new("temporal.gru", embed_dim, embed_dim));
            }
            TemporalSpec::Lstm => {
                layer.lstm = Some(LstmCell::new("temporal.lstm", embed_dim, embed_dim));
            }
            TemporalSpec::Tcn { kernel } => {
                if *kernel == 0 {
                    return Err(Error::Config("TCN kernel must be >= 1".into()));
                }
                layer.tcn_taps = (0..*kernel)
                    .map(|j| format!("temporal.tcn.k{j}"))
                    .collect();
            }
            TemporalSpec::Attention => {
                if embed_dim % 2 != 0 {
                    return Err(Error::Config(
                        "attention temporal unit needs an even embedding width \
                         (positional encoding)"
                            .into(),
                    ));
                }
            }
        }
        Ok(layer)
    }

    pub fn init_params(&self, params: &mut ParamSet, rng: &mut ChaCha8Rng) {
        match &self.spec {
            TemporalSpec::Gru => self.gru.as_ref().unwrap().init_params(params, rng),
            TemporalSpec::Lstm => self.lstm.as_ref().unwrap().init_params(params, rng),
            TemporalSpec::Tcn { .. } => {
                for name in &self.tcn_taps {
                    params.insert(
                        name.clone(),
                        crate::optim::uniform_vector(rng, self.embed_dim, 0.5),
                    );
                }
            }
            TemporalSpec::Attention => {
                for which in ["q", "k", "v"] {
                    params.insert(
                        format!("temporal.attn.{which}"),
                        glorot(rng, self.embed_dim, self.embed_dim),
                    );
                }
            }
        }
    }

    /// Reduce a time-ordered sequence of `n x l` embeddings to the final
    /// `n x l` state.
    pub fn apply<P: ParamView>(&self, p: &P, sequence: &[Tensor]) -> Result<Tensor> {
        let Some(first) = sequence.first() else {
            return Err(Error::InvalidArgument("empty window".into()));
        };
        let [n, l] = first.shape() else {
            return Err(Error::ShapeMismatch("embeddings must be rank 2".into()));
        };
        let (n, l) = (*n, *l);
        if l != self.embed_dim {
            return Err(Error::ShapeMismatch(format!(
                "embedding width {l} against temporal width {}",
                self.embed_dim
            )));
        }
        match &self.spec {
            TemporalSpec::Gru => {
                let cell = self.gru.as_ref().unwrap();
                let mut h = Tensor::zeros(&[n, l]);
                for step in sequence {
                    h = cell.forward(p, &h, step)?;
                }
                Ok(h)
            }
            TemporalSpec::Lstm => {
                let cell = self.lstm.as_ref().unwrap();
                let mut h = Tensor::zeros(&[n, l]);
                let mut c = Tensor::zeros(&[n, l]);
                for step in sequence {
                    let (h2, c2) = cell.forward(p, &h, &c, step)?;
                    h = h2;
                    c = c2;
                }
                Ok(h)
            }
            TemporalSpec::Tcn { kernel } => {
                // causal output at the final step: taps j back in time
                let mut total = Tensor::zeros(&[n, l]);
                for j in 0..*kernel {
                    let back = kernel - 1 - j;
                    if back >= sequence.len() {
                        continue; // implicit zero padding before the window
                    }
                    let step = &sequence[sequence.len() - 1 - back];
                    total = total.add(&step.mul_row_broadcast(p.param(&self.tcn_taps[j]))?)?;
                }
                Ok(total.tanh())
            }
            TemporalSpec::Attention => {
                let w = sequence.len();
                let pe = positional_encoding(w, l)?;
                let wq = p.param("temporal.attn.q");
                let wk = p.param("temporal.attn.k");
                let wv = p.param("temporal.attn.v");
                let mut rows = Vec::with_capacity(n);
                for v in 0..n {
                    // per-node history with positions marked
                    let mut steps = Vec::with_capacity(w);
                    for (t, step) in sequence.iter().enumerate() {
                        let row = step
                            .select_rows(&[v])?
                            .add(&Tensor::new(vec![1, l], pe.row(t).to_vec())?)?;
                        steps.push(row);
                    }
                    let refs: Vec<&Tensor> = steps.iter().collect();
                    let hist = crate::tensor::concat_rows(&refs)?;
                    let query = steps.last().unwrap().matmul(wq)?;
                    let keys = hist.matmul(wk)?;
                    let values = hist.matmul(wv)?;
                    rows.push(sdpa(&query, &keys, &values)?);
                }
                let refs: Vec<&Tensor> = rows.iter().collect();
                crate::tensor::concat_rows(&refs)
            }
        }
    }
}

/// A window snapshot aligned to a shared node universe.
pub struct AlignedStep {
    pub adjacency: Matrix,
    pub features: Tensor,
}

/// Align a window of snapshots over the union of their node ids.
pub fn align_window(
    window: &[&GraphSnapshot],
    input_dim: usize,
) -> Result<(Vec<u64>, Vec<AlignedStep>)> {
    if window.is_empty() {
        return Err(Error::InvalidArgument("window must hold >= 1 snapshot".into()));
    }
    let ids = aligned_node_ids(window);
    let mut steps = Vec::with_capacity(window.len());
    for snap in window {
        steps.push(AlignedStep {
            adjacency: aligned_adjacency(snap, &ids)?,
            features: Tensor::from_matrix(&aligned_features(snap, &ids, input_dim)),
        });
    }
    Ok((ids, steps))
}

/// Parameter view that overlays evolved spatial weights onto a base set.
struct Overlay<'a, P: ParamView> {
    evolved: BTreeMap<String, Tensor>,
    base: &'a P,
}

impl<P: ParamView> ParamView for Overlay<'_, P> {
    fn param(&self, name: &str) -> &Tensor {
        self.evolved.get(name).unwrap_or_else(|| self.base.param(name))
    }
}

/// Composed temporal graph model: spatial stack, temporal unit, head.
pub struct TgnnModel {
    pub spec: TgnnSpec,
    pub stack: SpatialStack,
    pub temporal: TemporalLayer,
    pub head: Head,
    evolve_cell: Option<GruCell>,
    spatial_template: Vec<(String, Vec<usize>)>,
}

impl TgnnModel {
    /// Build the model and initialise every parameter deterministically.
    pub fn build(
        spec: TgnnSpec,
        head_spec: HeadSpec,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Self, ParamSet)> {
        let stack = SpatialStack::build(spec.input_dim, &spec.spatial)?;
        let temporal = TemporalLayer::build(&spec.temporal, stack.output_dim)?;
        let head = Head::new(head_spec, stack.output_dim);
        let mut params = ParamSet::new();
        stack.init_params(&mut params, rng);
        temporal.init_params(&mut params, rng);
        head.init_params(&mut params, rng);

        let spatial_template = stack.template(&params);
        let evolve_cell = match spec.evolution {
            EvolutionKind::Embedding => None,
            EvolutionKind::Model => {
                let flat: usize = spatial_template.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
                if flat == 0 {
                    return Err(Error::Config(
                        "model evolution needs trainable spatial parameters".into(),
                    ));
                }
                let cell = GruCell::new("evolve.gru", flat, flat);
                cell.init_params(&mut params, rng);
                Some(cell)
            }
        };
        Ok((
            TgnnModel {
                spec,
                stack,
                temporal,
                head,
                evolve_cell,
                spatial_template,
            },
            params,
        ))
    }

    /// Flatten the spatial parameters (template order) into one row vector.
    fn flatten_spatial<P: ParamView>(&self, p: &P) -> Result<Tensor> {
        let parts: Vec<Tensor> = self
            .spatial_template
            .iter()
            .map(|(name, shape)| {
                let len: usize = shape.iter().product();
                p.param(name).reshape(&[1, len])
            })
            .collect::<Result<_>>()?;
        let refs: Vec<&Tensor> = parts.iter().collect();
        crate::tensor::concat(&refs, 1)
    }

    /// Slice a flat row vector back into named spatial parameters.
    fn unflatten_spatial(&self, flat: &Tensor) -> Result<BTreeMap<String, Tensor>> {
        let total: usize = self
            .spatial_template
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum();
        if flat.len() != total {
            return Err(Error::ShapeMismatch(format!(
                "flat parameter vector of {} entries against template of {total}",
                flat.len()
            )));
        }
        let row = flat.reshape(&[total])?;
        let mut out = BTreeMap::new();
        let mut offset = 0usize;
        for (name, shape) in &self.spatial_template {
            let len: usize = shape.iter().product();
            let piece = row
                .gather(&(offset..offset + len).collect::<Vec<_>>())?
                .reshape(shape)?;
            out.insert(name.clone(), piece);
            offset += len;
        }
        Ok(out)
    }

    /// Embedding-evolution forward: spatial embeddings per snapshot fed in
    /// time order through the temporal unit. Returns the per-node state and
    /// the mean-pooled graph vector.
    pub fn embedding_evolution_forward<P: ParamView>(
        &self,
        p: &P,
        steps: &[AlignedStep],
    ) -> Result<(Tensor, Tensor)> {
        if steps.is_empty() {
            return Err(Error::InvalidArgument("window must hold >= 1 snapshot".into()));
        }
        let mut sequence = Vec::with_capacity(steps.len());
        for step in steps {
            sequence.push(self.stack.forward(p, &step.adjacency, &step.features)?);
        }
        let h = self.temporal.apply(p, &sequence)?;
        let n = h.shape()[0];
        let h_graph = h.sum_axis(0)?.scale(1.0 / n.max(1) as f64);
        Ok((h, h_graph))
    }

    /// Model-evolution forward: the flattened spatial parameters advance
    /// one GRU step per snapshot and the final snapshot is read through the
    /// evolved weights.
    pub fn model_evolution_forward<P: ParamView>(
        &self,
        p: &P,
        steps: &[AlignedStep],
    ) -> Result<(Tensor, Tensor)> {
        let Some(cell) = &self.evolve_cell else {
            return Err(Error::Config(
                "model was not built for model evolution".into(),
            ));
        };
        if steps.is_empty() {
            return Err(Error::InvalidArgument("window must hold >= 1 snapshot".into()));
        }
        let mut theta = self.flatten_spatial(p)?; // 1 x F
        for _ in 1..steps.len() {
            theta = cell.forward(p, &theta, &theta)?;
        }
        let evolved = self.unflatten_spatial(&theta)?;
        let overlay = Overlay { evolved, base: p };
        let last = steps.last().unwrap();
        let h = self.stack.forward(&overlay, &last.adjacency, &last.features)?;
        let n = h.shape()[0];
        let h_graph = h.sum_axis(0)?.scale(1.0 / n.max(1) as f64);
        Ok((h, h_graph))
    }

    /// Dispatch on the configured evolution kind.
    pub fn forward_window<P: ParamView>(
        &self,
        p: &P,
        steps: &[AlignedStep],
    ) -> Result<(Tensor, Tensor)> {
        match self.spec.evolution {
            EvolutionKind::Embedding => self.embedding_evolution_forward(p, steps),
            EvolutionKind::Model => self.model_evolution_forward(p, steps),
        }
    }
}

/// One rolling-forecast emission: the model's node-level state for the
/// window ending at `input_end`, predicting `target_index`.
pub struct WindowPrediction {
    pub input_end: usize,
    pub target_index: usize,
    pub node_ids: Vec<u64>,
    pub node_state: Tensor,
    pub graph_state: Tensor,
}

/// Slide a window over the chain and emit the model state for every
/// position whose target lies inside the history. Inputs for the
/// prediction at `t + horizon` are exactly the snapshots
/// `[t - window + 1 ..= t]`, so nothing later than `t` is ever touched.
pub fn rolling_forecast<P: ParamView>(
    model: &TgnnModel,
    p: &P,
    tg: &TemporalGraph,
    window: usize,
    horizon: usize,
) -> Result<Vec<WindowPrediction>> {
    if horizon == 0 || window == 0 {
        return Err(Error::InvalidArgument(
            "window and horizon must be >= 1".into(),
        ));
    }
    if tg.len() < window + horizon {
        return Err(Error::InvalidArgument(format!(
            "chain of {} snapshots is too short for window {window} + horizon {horizon}",
            tg.len()
        )));
    }
    let snaps = tg.snapshots();
    let mut out = Vec::new();
    for end in (window - 1)..(tg.len() - horizon) {
        let slice: Vec<&GraphSnapshot> = snaps[end + 1 - window..=end].iter().collect();
        let (ids, steps) = align_window(&slice, model.spec.input_dim)?;
        let (h, h_graph) = model.forward_window(p, &steps)?;
        out.push(WindowPrediction {
            input_end: end,
            target_index: end + horizon,
            node_ids: ids,
            node_state: h,
            graph_state: h_graph,
        });
    }
    Ok(out)
}
