use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Dataset, Graph, Label, Task};
use crate::numeric::{Matrix, Rng};

use super::iso::contains_motif;
use super::{provenance, GeneratorConfig};

/// Typed subgraph planted in positive graphs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotifSpec {
    /// Edges between motif-local node ids.
    pub edges: Vec<(usize, usize)>,
    /// Feature type of each motif node.
    pub node_types: Vec<usize>,
    /// Motif node that receives the single edge to the base graph.
    pub attach_node: usize,
}

impl MotifSpec {
    /// Star with `leaves` leaves around node 0.
    pub fn star(leaves: usize, center_type: usize, leaf_type: usize, attach_node: usize) -> Self {
        let mut node_types = vec![center_type];
        node_types.extend(std::iter::repeat_n(leaf_type, leaves));
        Self {
            edges: (1..=leaves).map(|l| (0, l)).collect(),
            node_types,
            attach_node,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.node_types.len()
    }

    pub fn validate(&self, num_types: usize) -> Result<()> {
        let k = self.num_nodes();
        let bad = |reason: String| Err(Error::config("generator.motif", reason));
        if k == 0 {
            return bad("motif has no nodes".into());
        }
        if self.attach_node >= k {
            return bad(format!("attach_node {} out of range", self.attach_node));
        }
        if let Some(t) = self.node_types.iter().find(|&&t| t >= num_types) {
            return bad(format!("node type {t} outside vocabulary of {num_types}"));
        }
        let mut nbrs = vec![Vec::new(); k];
        for &(a, b) in &self.edges {
            if a >= k || b >= k || a == b {
                return bad(format!("invalid motif edge ({a}, {b})"));
            }
            nbrs[a].push(b);
            nbrs[b].push(a);
        }
        let mut seen = vec![false; k];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &w in &nbrs[u] {
                if !std::mem::replace(&mut seen[w], true) {
                    stack.push(w);
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return bad("motif is not connected".into());
        }
        Ok(())
    }
}

impl Default for MotifSpec {
    fn default() -> Self {
        MotifSpec::star(3, 0, 1, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotifGraphConfig {
    pub count: usize,
    pub min_nodes: usize,
    pub max_nodes: usize,
    pub num_types: usize,
    /// Extra random edges added on top of the spanning tree, drawn uniformly
    /// from `0..=max_extra_edges` per graph.
    pub max_extra_edges: usize,
    /// Fraction of positive (motif-bearing) graphs.
    pub class_balance: f64,
    pub motif: MotifSpec,
    /// Keep the types used by the motif's attach node out of base graphs.
    pub reserve_attach_type: bool,
}

impl Default for MotifGraphConfig {
    fn default() -> Self {
        Self {
            count: 600,
            min_nodes: 10,
            max_nodes: 20,
            num_types: 8,
            max_extra_edges: 3,
            class_balance: 0.5,
            motif: MotifSpec::default(),
            reserve_attach_type: false,
        }
    }
}

impl MotifGraphConfig {
    pub fn validate(&self) -> Result<()> {
        if self.count < 2 {
            return Err(Error::config("generator.count", "must be >= 2"));
        }
        if !(self.class_balance > 0.0 && self.class_balance < 1.0) {
            return Err(Error::config("generator.class_balance", "must be in (0, 1)"));
        }
        let pos = self.positives();
        if pos == 0 || pos == self.count {
            return Err(Error::config("generator.class_balance", "leaves one class empty"));
        }
        if self.min_nodes < 1 || self.min_nodes > self.max_nodes {
            return Err(Error::config("generator.min_nodes", "need 1 <= min_nodes <= max_nodes"));
        }
        if self.num_types < 2 {
            return Err(Error::config("generator.num_types", "must be >= 2"));
        }
        self.motif.validate(self.num_types)?;
        if self.motif.num_nodes() > self.min_nodes {
            return Err(Error::Generator(format!(
                "motif of {} nodes is larger than the smallest base graph ({} nodes)",
                self.motif.num_nodes(),
                self.min_nodes
            )));
        }
        if self.reserve_attach_type && self.num_types < 2 {
            return Err(Error::config("generator.reserve_attach_type", "no types left for base graphs"));
        }
        Ok(())
    }

    fn positives(&self) -> usize {
        (self.count as f64 * self.class_balance).round() as usize
    }
}

const MAX_ATTEMPTS: usize = 10_000;

fn adjacency_lists(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut l = vec![Vec::new(); n];
    for &(a, b) in edges {
        l[a].push(b);
        l[b].push(a);
    }
    l
}

/// Random recursive tree plus extra edges, typed uniformly.
fn base_graph(cfg: &MotifGraphConfig, rng: &mut Rng) -> (Vec<(usize, usize)>, Vec<usize>) {
    let n = rng.range_inclusive(cfg.min_nodes, cfg.max_nodes);
    let mut edges: Vec<(usize, usize)> = (1..n).map(|v| (rng.below(v), v)).collect();
    let extra = rng.range_inclusive(0, cfg.max_extra_edges);
    for _ in 0..extra {
        let (a, b) = (rng.below(n), rng.below(n));
        let e = (a.min(b), a.max(b));
        if a != b && !edges.contains(&e) {
            edges.push(e);
        }
    }
    let reserved = cfg.motif.node_types[cfg.motif.attach_node];
    let types = (0..n)
        .map(|_| {
            if cfg.reserve_attach_type {
                let t = rng.below(cfg.num_types - 1);
                if t >= reserved { t + 1 } else { t }
            } else {
                rng.below(cfg.num_types)
            }
        })
        .collect();
    (edges, types)
}

fn one_hot(types: &[usize], num_types: usize) -> Matrix {
    let mut m = Matrix::zeros(types.len(), num_types);
    for (v, &t) in types.iter().enumerate() {
        m[(v, t)] = 1.0;
    }
    m
}

fn make_graph(cfg: &MotifGraphConfig, positive: bool, rng: &mut Rng) -> Result<Graph> {
    let motif = &cfg.motif;
    let mut attempt = 0;
    let (mut edges, mut types) = loop {
        let (edges, types) = base_graph(cfg, rng);
        if !contains_motif(&types, &adjacency_lists(types.len(), &edges), motif)? {
            break (edges, types);
        }
        attempt += 1;
        if attempt >= MAX_ATTEMPTS {
            return Err(Error::Generator("could not draw a motif-free base graph".into()));
        }
    };
    let n_base = types.len();
    let mut motif_ids = vec![None; n_base];
    let mut gt_edges = Vec::new();
    if positive {
        types.extend(&motif.node_types);
        motif_ids.extend(std::iter::repeat_n(Some(0), motif.num_nodes()));
        for &(a, b) in &motif.edges {
            gt_edges.push((n_base + a, n_base + b));
        }
        edges.extend(&gt_edges);
        edges.push((rng.below(n_base), n_base + motif.attach_node));
    }
    let n = types.len();
    if contains_motif(&types, &adjacency_lists(n, &edges), motif)? != positive {
        return Err(Error::Generator("motif check disagrees with the planted label".into()));
    }
    let label = Label::Graph(usize::from(positive));
    let mut g = Graph::new(n, edges, one_hot(&types, cfg.num_types), label)?;
    if positive {
        g = g
            .with_ground_truth_nodes((n_base..n).collect())?
            .with_ground_truth_edges(gt_edges)?
            .with_motif_ids(motif_ids)?;
    }
    let mut perm: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut perm);
    g.permute(&perm)
}

/// Graph-classification dataset: class 1 graphs carry one planted motif,
/// class 0 graphs are verified motif-free. Graph `i` is drawn from child
/// stream `i + 1` of `rng`; stream 0 places the labels.
pub fn gen_motif_graphs(cfg: &MotifGraphConfig, rng: &Rng) -> Result<Dataset> {
    cfg.validate()?;
    let mut labels: Vec<bool> = (0..cfg.count).map(|i| i < cfg.positives()).collect();
    rng.child(0).shuffle(&mut labels);
    let graphs = labels
        .iter()
        .enumerate()
        .map(|(i, &pos)| make_graph(cfg, pos, &mut rng.child(i as u64 + 1)))
        .collect::<Result<Vec<_>>>()?;
    let mut d = Dataset::new(Task::GraphClassification, 2, graphs)?;
    d.generator = Some(provenance(&GeneratorConfig::MotifGraphs(cfg.clone()), rng));
    Ok(d)
}
