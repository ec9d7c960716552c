use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Dataset, Graph, Label, Task};
use crate::numeric::{Matrix, Rng};

use super::{provenance, GeneratorConfig};

/// House motif over local ids `0` top, `1`/`2` middle, `3`/`4` bottom.
pub const HOUSE_EDGES: [(usize, usize); 6] = [(0, 1), (0, 2), (1, 2), (1, 3), (2, 4), (3, 4)];
const HOUSE_LABELS: [usize; 5] = [1, 2, 2, 3, 3];
/// The bottom node wired to the base graph.
const HOUSE_ANCHOR: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaShapesConfig {
    pub base_nodes: usize,
    pub motif_count: usize,
    /// Edges each new base node brings in the preferential-attachment process.
    pub edges_per_node: usize,
    /// Node features are one-hot degrees `0..=degree_cap`, larger degrees
    /// sharing the last slot.
    pub degree_cap: usize,
}

impl Default for BaShapesConfig {
    fn default() -> Self {
        Self { base_nodes: 300, motif_count: 80, edges_per_node: 5, degree_cap: 10 }
    }
}

impl BaShapesConfig {
    pub fn validate(&self) -> Result<()> {
        if self.base_nodes < 20 {
            return Err(Error::config("generator.base_nodes", "must be >= 20"));
        }
        if self.motif_count < 1 {
            return Err(Error::config("generator.motif_count", "must be >= 1"));
        }
        if self.edges_per_node < 1 || self.edges_per_node >= self.base_nodes {
            return Err(Error::config("generator.edges_per_node", "must be in [1, base_nodes)"));
        }
        if self.degree_cap < 1 {
            return Err(Error::config("generator.degree_cap", "must be >= 1"));
        }
        Ok(())
    }
}

/// Barabási-Albert edges on `n` nodes: a star on the first `m + 1` nodes,
/// then each new node links to `m` distinct earlier nodes drawn with
/// probability proportional to degree.
pub fn preferential_attachment(n: usize, m: usize, rng: &mut Rng) -> Vec<(usize, usize)> {
    let mut edges: Vec<(usize, usize)> = (1..=m).map(|v| (0, v)).collect();
    let mut repeated: Vec<usize> = edges.iter().flat_map(|&(a, b)| [a, b]).collect();
    for v in (m + 1)..n {
        let mut targets: Vec<usize> = Vec::with_capacity(m);
        while targets.len() < m {
            let t = repeated[rng.below(repeated.len())];
            if !targets.contains(&t) {
                targets.push(t);
            }
        }
        for &t in &targets {
            edges.push((t, v));
            repeated.push(t);
            repeated.push(v);
        }
    }
    edges
}

/// Node-classification dataset: a preferential-attachment base (label 0)
/// with `motif_count` houses hung off uniformly chosen base nodes. House
/// nodes are labelled top 1, middle 2, bottom 3; every house node's ground
/// truth is the six edges of its own house.
pub fn gen_ba_shapes(cfg: &BaShapesConfig, rng: &Rng) -> Result<Dataset> {
    cfg.validate()?;
    let mut r = rng.child(0);
    let nb = cfg.base_nodes;
    let mut edges = preferential_attachment(nb, cfg.edges_per_node, &mut r);
    let n = nb + 5 * cfg.motif_count;
    let mut labels = vec![0; n];
    let mut motif_ids = vec![None; n];
    let mut gt = Vec::with_capacity(6 * cfg.motif_count);
    for h in 0..cfg.motif_count {
        let off = nb + 5 * h;
        for (k, &l) in HOUSE_LABELS.iter().enumerate() {
            labels[off + k] = l;
            motif_ids[off + k] = Some(h);
        }
        for &(a, b) in &HOUSE_EDGES {
            edges.push((off + a, off + b));
            gt.push((off + a, off + b));
        }
        edges.push((r.below(nb), off + HOUSE_ANCHOR));
    }
    let mut degree = vec![0usize; n];
    for &(a, b) in &edges {
        degree[a] += 1;
        degree[b] += 1;
    }
    let mut feats = Matrix::zeros(n, cfg.degree_cap + 1);
    for (v, &d) in degree.iter().enumerate() {
        feats[(v, d.min(cfg.degree_cap))] = 1.0;
    }
    let g = Graph::new(n, edges, feats, Label::Nodes(labels))?
        .with_ground_truth_nodes((nb..n).collect())?
        .with_ground_truth_edges(gt)?
        .with_motif_ids(motif_ids)?;
    let mut d = Dataset::new(Task::NodeClassification, 4, vec![g])?;
    d.generator = Some(provenance(&GeneratorConfig::BaShapes(cfg.clone()), rng));
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_counts_and_house_ground_truth() {
        let cfg = BaShapesConfig { base_nodes: 60, motif_count: 7, ..Default::default() };
        let d = gen_ba_shapes(&cfg, &Rng::new(1)).unwrap();
        let y = d.instance_labels();
        assert_eq!(y.iter().filter(|&&c| c == 0).count(), 60);
        assert_eq!(y.iter().filter(|&&c| c != 0).count(), 35);
        let g = &d.graphs[0];
        for v in 60..95 {
            assert_eq!(g.node_ground_truth_edges(v).unwrap().len(), 6);
        }
        assert!(g.node_ground_truth_edges(0).is_none());
    }

    #[test]
    fn attachment_has_expected_edge_count() {
        let e = preferential_attachment(50, 3, &mut Rng::new(2));
        assert_eq!(e.len(), 3 + 3 * 46);
        let mut set: Vec<_> = e.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
        set.sort();
        set.dedup();
        assert_eq!(set.len(), e.len());
    }
}
