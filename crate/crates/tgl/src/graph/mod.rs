//! Temporal graph data model and structural operators.
//!
//! A [`GraphSnapshot`] is one timestamped graph: an ordered set of node ids,
//! an edge list, and optional node/edge feature matrices. A
//! [`TemporalGraph`] is a chain of snapshots with strictly increasing
//! timestamps. Node ids are global and stable across snapshots; inside one
//! snapshot they map to dense indices `0..n` in the order listed, which is
//! the row order of every matrix derived from it.

mod io;

pub use io::{read_jsonl, read_jsonl_from, write_jsonl, write_jsonl_to};

use crate::{Error, Matrix, Result};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeSet, HashMap, HashSet};

/// One timestamped graph in a temporal chain.
#[derive(Debug, Clone)]
pub struct GraphSnapshot {
    t: f64,
    nodes: Vec<u64>,
    index: HashMap<u64, usize>,
    edges: Vec<(u64, u64)>,
    edge_index: HashMap<(u64, u64), usize>,
    x: Option<Matrix>,
    w: Option<Matrix>,
    directed: bool,
    node_classes: Option<Vec<i64>>,
    edge_classes: Option<Vec<i64>>,
    graph_class: Option<i64>,
}

impl GraphSnapshot {
    /// Build a snapshot, validating the structural invariants: endpoints
    /// must be listed nodes, duplicate edges are rejected (undirected edges
    /// are stored canonically with the smaller id first), and feature row
    /// counts must match `|V|` and `|E|`.
    pub fn new(
        t: f64,
        nodes: Vec<u64>,
        edges: Vec<(u64, u64)>,
        x: Option<Matrix>,
        w: Option<Matrix>,
        directed: bool,
    ) -> Result<Self> {
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, &id) in nodes.iter().enumerate() {
            if index.insert(id, i).is_some() {
                return Err(Error::Format(format!("duplicate node id {id}")));
            }
        }
        let mut canonical = Vec::with_capacity(edges.len());
        let mut edge_index = HashMap::with_capacity(edges.len());
        for (u, v) in edges {
            if !index.contains_key(&u) {
                return Err(Error::UnknownNode(u));
            }
            if !index.contains_key(&v) {
                return Err(Error::UnknownNode(v));
            }
            let key = if directed || u <= v { (u, v) } else { (v, u) };
            if edge_index.insert(key, canonical.len()).is_some() {
                return Err(Error::Format(format!(
                    "duplicate edge ({}, {})",
                    key.0, key.1
                )));
            }
            canonical.push(key);
        }
        if let Some(m) = &x {
            if m.rows() != nodes.len() {
                return Err(Error::ShapeMismatch(format!(
                    "node features have {} rows for {} nodes",
                    m.rows(),
                    nodes.len()
                )));
            }
        }
        if let Some(m) = &w {
            if m.rows() != canonical.len() {
                return Err(Error::ShapeMismatch(format!(
                    "edge features have {} rows for {} edges",
                    m.rows(),
                    canonical.len()
                )));
            }
        }
        Ok(GraphSnapshot {
            t,
            nodes,
            index,
            edges: canonical,
            edge_index,
            x,
            w,
            directed,
            node_classes: None,
            edge_classes: None,
            graph_class: None,
        })
    }

    pub fn with_node_classes(mut self, y: Vec<i64>) -> Result<Self> {
        if y.len() != self.nodes.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} node classes for {} nodes",
                y.len(),
                self.nodes.len()
            )));
        }
        self.node_classes = Some(y);
        Ok(self)
    }

    pub fn with_edge_classes(mut self, z: Vec<i64>) -> Result<Self> {
        if z.len() != self.edges.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} edge classes for {} edges",
                z.len(),
                self.edges.len()
            )));
        }
        self.edge_classes = Some(z);
        Ok(self)
    }

    pub fn with_graph_class(mut self, g: i64) -> Self {
        self.graph_class = Some(g);
        self
    }

    pub fn timestamp(&self) -> f64 {
        self.t
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> &[u64] {
        &self.nodes
    }

    pub fn edges(&self) -> &[(u64, u64)] {
        &self.edges
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn node_features(&self) -> Option<&Matrix> {
        self.x.as_ref()
    }

    pub fn edge_features(&self) -> Option<&Matrix> {
        self.w.as_ref()
    }

    pub fn node_classes(&self) -> Option<&[i64]> {
        self.node_classes.as_deref()
    }

    pub fn edge_classes(&self) -> Option<&[i64]> {
        self.edge_classes.as_deref()
    }

    pub fn graph_class(&self) -> Option<i64> {
        self.graph_class
    }

    /// Dense index of a global node id.
    pub fn node_position(&self, id: u64) -> Result<usize> {
        self.index.get(&id).copied().ok_or(Error::UnknownNode(id))
    }

    pub fn has_edge(&self, u: u64, v: u64) -> bool {
        let key = if self.directed || u <= v { (u, v) } else { (v, u) };
        self.edge_index.contains_key(&key)
    }

    /// Row of the edge-feature matrix assigned to edge `(u, v)`.
    pub fn edge_row(&self, u: u64, v: u64) -> Option<usize> {
        let key = if self.directed || u <= v { (u, v) } else { (v, u) };
        self.edge_index.get(&key).copied()
    }

    /// Plain or weighted adjacency matrix. With `weighted`, entry `(u, v)`
    /// carries the requested channel of the edge-feature row mapped to that
    /// edge; without it the entry is the 0/1 edge indicator. Undirected
    /// snapshots produce symmetric matrices.
    pub fn adjacency(&self, weighted: bool, weight_channel: usize) -> Result<Matrix> {
        let w = if weighted {
            let w = self
                .w
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("weighted adjacency requested but the snapshot has no edge features".into()))?;
            if weight_channel >= w.cols() {
                return Err(Error::InvalidArgument(format!(
                    "weight channel {} out of range (edge features have {} channels)",
                    weight_channel,
                    w.cols()
                )));
            }
            Some(w)
        } else {
            None
        };
        let n = self.nodes.len();
        let mut a = Matrix::zeros(n, n);
        for (row, &(u, v)) in self.edges.iter().enumerate() {
            let ui = self.index[&u];
            let vi = self.index[&v];
            let value = match w {
                Some(w) => w.get(row, weight_channel),
                None => 1.0,
            };
            a.set(ui, vi, value);
            if !self.directed {
                a.set(vi, ui, value);
            }
        }
        Ok(a)
    }

    /// 1-hop neighbour ids of `v` (excluding `v` unless it has a self-loop).
    pub fn neighbors(&self, v: u64) -> Result<Vec<u64>> {
        self.node_position(v)?;
        let mut out = BTreeSet::new();
        for &(a, b) in &self.edges {
            if self.directed {
                // Edge (u, v) points u -> v; u is an in-neighbour of v.
                if b == v {
                    out.insert(a);
                }
            } else {
                if a == v {
                    out.insert(b);
                }
                if b == v {
                    out.insert(a);
                }
            }
        }
        Ok(out.into_iter().collect())
    }

    /// Nodes reachable from `v` by a walk of exactly `k` edges, i.e. the
    /// support of column `v` of the k-th adjacency power. Walks may revisit
    /// nodes, so for `k >= 2` this set can contain `v` itself.
    pub fn k_hop_neighbors(&self, v: u64, k: u32) -> Result<BTreeSet<u64>> {
        if k == 0 {
            return Err(Error::InvalidArgument("k-hop requires k >= 1".into()));
        }
        let col = self.node_position(v)?;
        let a = self.adjacency(false, 0)?;
        let ak = a.pow(k)?;
        Ok(self
            .nodes
            .iter()
            .enumerate()
            .filter(|&(row, _)| ak.get(row, col) > 0.0)
            .map(|(_, &id)| id)
            .collect())
    }

    /// Sample at most `q` distinct 1-hop neighbours of `v`, deterministic
    /// under a fixed seed. A neighbourhood of size `<= q` is returned whole.
    pub fn sample_neighbors(&self, v: u64, q: usize, seed: u64) -> Result<BTreeSet<u64>> {
        if q == 0 {
            return Err(Error::InvalidArgument("sample cap q must be >= 1".into()));
        }
        let pool = self.neighbors(v)?;
        if pool.len() <= q {
            return Ok(pool.into_iter().collect());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let picks = rand::seq::index::sample(&mut rng, pool.len(), q);
        Ok(picks.into_iter().map(|i| pool[i]).collect())
    }

    /// Degree matrix of the unweighted adjacency.
    pub fn degree_matrix(&self) -> Result<Matrix> {
        degree_matrix(&self.adjacency(false, 0)?)
    }
}

/// `D = diag(1^T A)`: each diagonal entry is the column sum of `A`.
pub fn degree_matrix(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    Ok(Matrix::diag(&a.col_sums()))
}

/// Combinatorial Laplacian `L = D - A`.
pub fn laplacian(a: &Matrix) -> Result<Matrix> {
    degree_matrix(a)?.sub(a)
}

/// Symmetric normalized Laplacian `D^{-1/2} (D - A) D^{-1/2}`.
///
/// Zero-degree nodes use the pseudo-inverse convention `d^{-1/2} = 0`, so
/// their rows and columns come out all-zero instead of dividing by zero.
pub fn normalized_laplacian(a: &Matrix) -> Result<Matrix> {
    let degrees = a.col_sums();
    if let Some(d) = degrees.iter().find(|&&d| d < 0.0) {
        return Err(Error::Numeric(format!(
            "negative degree {d} under normalized Laplacian"
        )));
    }
    let l = laplacian(a)?;
    let inv_sqrt: Vec<f64> = degrees
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    let n = a.rows();
    Ok(Matrix::from_fn(n, n, |i, j| {
        inv_sqrt[i] * l.get(i, j) * inv_sqrt[j]
    }))
}

/// A chain of snapshots with strictly increasing timestamps.
#[derive(Debug, Clone, Default)]
pub struct TemporalGraph {
    snapshots: Vec<GraphSnapshot>,
}

impl TemporalGraph {
    pub fn new(snapshots: Vec<GraphSnapshot>) -> Result<Self> {
        for pair in snapshots.windows(2) {
            if pair[1].t <= pair[0].t {
                return Err(Error::Format(format!(
                    "timestamps must strictly increase: {} then {}",
                    pair[0].t, pair[1].t
                )));
            }
        }
        Ok(TemporalGraph { snapshots })
    }

    pub fn snapshots(&self) -> &[GraphSnapshot] {
        &self.snapshots
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&GraphSnapshot> {
        self.snapshots.get(i)
    }

    /// Sorted union of global node ids over every snapshot.
    pub fn node_ids(&self) -> Vec<u64> {
        let mut ids: BTreeSet<u64> = BTreeSet::new();
        for s in &self.snapshots {
            ids.extend(s.nodes.iter().copied());
        }
        ids.into_iter().collect()
    }
}

/// Sorted union of node ids over a window of snapshots; recurrent models
/// use this to keep state rows aligned while the node set changes.
pub fn aligned_node_ids(window: &[&GraphSnapshot]) -> Vec<u64> {
    let mut ids: BTreeSet<u64> = BTreeSet::new();
    for s in window {
        ids.extend(s.nodes().iter().copied());
    }
    ids.into_iter().collect()
}

/// Node features of `snap` re-indexed to `ids` rows; nodes absent from the
/// snapshot contribute zero rows. `dim` fixes the column count so snapshots
/// without features still produce a usable matrix.
pub fn aligned_features(snap: &GraphSnapshot, ids: &[u64], dim: usize) -> Matrix {
    let mut out = Matrix::zeros(ids.len(), dim);
    if let Some(x) = snap.node_features() {
        for (row, &id) in ids.iter().enumerate() {
            if let Ok(pos) = snap.node_position(id) {
                for j in 0..dim.min(x.cols()) {
                    out.set(row, j, x.get(pos, j));
                }
            }
        }
    }
    out
}

/// Unweighted adjacency of `snap` re-indexed to `ids`; absent nodes are
/// isolated.
pub fn aligned_adjacency(snap: &GraphSnapshot, ids: &[u64]) -> Result<Matrix> {
    let lookup: HashMap<u64, usize> = ids.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut a = Matrix::zeros(ids.len(), ids.len());
    for &(u, v) in snap.edges() {
        let (Some(&ui), Some(&vi)) = (lookup.get(&u), lookup.get(&v)) else {
            return Err(Error::UnknownNode(u));
        };
        a.set(ui, vi, 1.0);
        if !snap.is_directed() {
            a.set(vi, ui, 1.0);
        }
    }
    Ok(a)
}

/// All unordered non-adjacent pairs of a snapshot (u < v), used for negative
/// sampling in link prediction.
pub fn non_edges(snap: &GraphSnapshot) -> Vec<(u64, u64)> {
    let ids = snap.nodes();
    let present: HashSet<(u64, u64)> = snap.edges().iter().copied().collect();
    let mut out = Vec::new();
    for i in 0..ids.len() {
        for j in (i + 1)..ids.len() {
            let (u, v) = (ids[i].min(ids[j]), ids[i].max(ids[j]));
            if !present.contains(&(u, v)) && !present.contains(&(v, u)) {
                out.push((u, v));
            }
        }
    }
    out
}
