//! Graph data model, adjacency normalization and dataset containers.

mod dataset;
mod io;

use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};
use crate::numeric::Matrix;

pub use dataset::{split_dataset, Dataset, Split, SplitKind, Task, DEFAULT_FRACTIONS};
pub use io::{read_dataset, write_dataset, DATASET_FORMAT, DATASET_VERSION};

/// Class target of a graph: one class for graph classification, one per
/// node for node classification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Label {
    Graph(usize),
    Nodes(Vec<usize>),
}

/// Undirected, unattributed-edge graph with node features.
///
/// Edges are stored once as `(min, max)` pairs in insertion order; self-loops
/// are never stored (normalization adds them).
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    features: Matrix,
    label: Label,
    ground_truth_nodes: Option<Vec<usize>>,
    ground_truth_edges: Option<Vec<(usize, usize)>>,
    motif_ids: Option<Vec<Option<usize>>>,
}

impl Graph {
    pub fn new(
        num_nodes: usize,
        edges: Vec<(usize, usize)>,
        features: Matrix,
        label: Label,
    ) -> Result<Self> {
        if num_nodes == 0 {
            return Err(Error::InvalidGraph("graph has no nodes".into()));
        }
        if features.rows() != num_nodes {
            return Err(Error::InvalidGraph(format!(
                "feature matrix has {} rows for {num_nodes} nodes",
                features.rows()
            )));
        }
        if !features.is_finite() {
            return Err(Error::InvalidGraph("non-finite node feature".into()));
        }
        if let Label::Nodes(ref y) = label {
            if y.len() != num_nodes {
                return Err(Error::InvalidGraph(format!(
                    "{} node labels for {num_nodes} nodes",
                    y.len()
                )));
            }
        }
        let edges = canonical_edges(num_nodes, edges)?;
        Ok(Self {
            num_nodes,
            edges,
            features,
            label,
            ground_truth_nodes: None,
            ground_truth_edges: None,
            motif_ids: None,
        })
    }

    pub fn with_ground_truth_nodes(mut self, nodes: Vec<usize>) -> Result<Self> {
        let mut seen = HashSet::new();
        for &v in &nodes {
            if v >= self.num_nodes || !seen.insert(v) {
                return Err(Error::InvalidGraph(format!(
                    "bad ground-truth node {v}"
                )));
            }
        }
        self.ground_truth_nodes = Some(nodes);
        Ok(self)
    }

    pub fn with_ground_truth_edges(mut self, edges: Vec<(usize, usize)>) -> Result<Self> {
        let edges = canonical_edges(self.num_nodes, edges)?;
        let known: HashSet<_> = self.edges.iter().copied().collect();
        if let Some(e) = edges.iter().find(|e| !known.contains(e)) {
            return Err(Error::InvalidGraph(format!(
                "ground-truth edge {e:?} is not an edge of the graph"
            )));
        }
        self.ground_truth_edges = Some(edges);
        Ok(self)
    }

    /// Per-node motif membership; node-level ground truth for node `v` is the
    /// set of ground-truth edges inside `v`'s motif.
    pub fn with_motif_ids(mut self, ids: Vec<Option<usize>>) -> Result<Self> {
        if ids.len() != self.num_nodes {
            return Err(Error::InvalidGraph(format!(
                "{} motif ids for {} nodes",
                ids.len(),
                self.num_nodes
            )));
        }
        self.motif_ids = Some(ids);
        Ok(self)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_features(&self) -> usize {
        self.features.cols()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn label(&self) -> &Label {
        &self.label
    }

    pub fn ground_truth_nodes(&self) -> Option<&[usize]> {
        self.ground_truth_nodes.as_deref()
    }

    pub fn ground_truth_edges(&self) -> Option<&[(usize, usize)]> {
        self.ground_truth_edges.as_deref()
    }

    pub fn motif_ids(&self) -> Option<&[Option<usize>]> {
        self.motif_ids.as_deref()
    }

    /// Ground-truth edges explaining node `v`: the ground-truth edges whose
    /// endpoints both belong to `v`'s motif. `None` when `v` is not in a motif.
    pub fn node_ground_truth_edges(&self, v: usize) -> Option<Vec<(usize, usize)>> {
        let ids = self.motif_ids.as_ref()?;
        let gt = self.ground_truth_edges.as_ref()?;
        let m = ids.get(v).copied().flatten()?;
        Some(
            gt.iter()
                .copied()
                .filter(|&(a, b)| ids[a] == Some(m) && ids[b] == Some(m))
                .collect(),
        )
    }

    /// Map from canonical edge pair to its index in [`Graph::edges`].
    pub fn edge_index(&self) -> HashMap<(usize, usize), usize> {
        self.edges.iter().enumerate().map(|(i, &e)| (e, i)).collect()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_nodes];
        for &(a, b) in &self.edges {
            deg[a] += 1;
            deg[b] += 1;
        }
        deg
    }

    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_nodes];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    /// Dense 0/1 adjacency without self-loops.
    pub fn adjacency(&self) -> Matrix {
        let mut a = Matrix::zeros(self.num_nodes, self.num_nodes);
        for &(u, v) in &self.edges {
            a[(u, v)] = 1.0;
            a[(v, u)] = 1.0;
        }
        a
    }

    /// Nodes within `hops` edges of `center`, sorted ascending.
    pub fn k_hop_nodes(&self, center: usize, hops: usize) -> Vec<usize> {
        let nbrs = self.neighbors();
        let mut seen = vec![false; self.num_nodes];
        seen[center] = true;
        let mut frontier = vec![center];
        for _ in 0..hops {
            let mut next = Vec::new();
            for &u in &frontier {
                for &w in &nbrs[u] {
                    if !seen[w] {
                        seen[w] = true;
                        next.push(w);
                    }
                }
            }
            frontier = next;
        }
        (0..self.num_nodes).filter(|&v| seen[v]).collect()
    }

    /// Relabels node `v` as `perm[v]`, carrying features, labels, edges and
    /// ground truth along.
    pub fn permute(&self, perm: &[usize]) -> Result<Graph> {
        let n = self.num_nodes;
        let mut check = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut check[p], true)) {
            return Err(Error::InvalidGraph("not a permutation".into()));
        }
        let mut features = Matrix::zeros(n, self.features.cols());
        for v in 0..n {
            features.row_mut(perm[v]).copy_from_slice(self.features.row(v));
        }
        let label = match &self.label {
            Label::Graph(c) => Label::Graph(*c),
            Label::Nodes(y) => {
                let mut out = vec![0; n];
                for v in 0..n {
                    out[perm[v]] = y[v];
                }
                Label::Nodes(out)
            }
        };
        let edges = self.edges.iter().map(|&(a, b)| (perm[a], perm[b])).collect();
        let mut g = Graph::new(n, edges, features, label)?;
        if let Some(gt) = &self.ground_truth_nodes {
            g = g.with_ground_truth_nodes(gt.iter().map(|&v| perm[v]).collect())?;
        }
        if let Some(gt) = &self.ground_truth_edges {
            g = g.with_ground_truth_edges(gt.iter().map(|&(a, b)| (perm[a], perm[b])).collect())?;
        }
        if let Some(ids) = &self.motif_ids {
            let mut out = vec![None; n];
            for v in 0..n {
                out[perm[v]] = ids[v];
            }
            g = g.with_motif_ids(out)?;
        }
        Ok(g)
    }
}

fn canonical_edges(n: usize, edges: Vec<(usize, usize)>) -> Result<Vec<(usize, usize)>> {
    let mut seen = HashSet::with_capacity(edges.len());
    let mut out = Vec::with_capacity(edges.len());
    for (a, b) in edges {
        if a >= n || b >= n {
            return Err(Error::InvalidGraph(format!(
                "edge ({a}, {b}) has an endpoint outside [0, {n})"
            )));
        }
        if a == b {
            return Err(Error::InvalidGraph(format!("self-loop on node {a}")));
        }
        let e = (a.min(b), a.max(b));
        if !seen.insert(e) {
            return Err(Error::InvalidGraph(format!("duplicate edge {e:?}")));
        }
        out.push(e);
    }
    Ok(out)
}

/// Symmetric renormalized adjacency `D̃^{-1/2} (A + I) D̃^{-1/2}` with
/// `D̃` the degree matrix of `A + I`. Isolated nodes get `[i][i] = 1`.
pub fn normalize_adjacency(g: &Graph) -> Matrix {
    let n = g.num_nodes();
    let inv_sqrt: Vec<f64> = g
        .degrees()
        .iter()
        .map(|&d| 1.0 / ((d + 1) as f64).sqrt())
        .collect();
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        a[(i, i)] = inv_sqrt[i] * inv_sqrt[i];
    }
    for &(u, v) in g.edges() {
        let w = inv_sqrt[u] * inv_sqrt[v];
        a[(u, v)] = w;
        a[(v, u)] = w;
    }
    a
}
