use crate::error::{Error, Result};

use super::MotifSpec;

/// Whether a graph with node `types` and adjacency lists `nbrs` contains
/// `motif` as a (not necessarily induced) subgraph with matching node types.
/// Plain backtracking; motifs are a handful of nodes.
pub fn contains_motif(types: &[usize], nbrs: &[Vec<usize>], motif: &MotifSpec) -> Result<bool> {
    if types.len() != nbrs.len() {
        return Err(Error::Shape(format!("{} types for {} nodes", types.len(), nbrs.len())));
    }
    let k = motif.node_types.len();
    let mut motif_adj = vec![vec![false; k]; k];
    for &(a, b) in &motif.edges {
        motif_adj[a][b] = true;
        motif_adj[b][a] = true;
    }
    let adjacent = |u: usize, v: usize| nbrs[u].contains(&v);
    let mut assign = vec![usize::MAX; k];
    let mut used = vec![false; types.len()];

    fn extend(
        i: usize,
        assign: &mut Vec<usize>,
        used: &mut Vec<bool>,
        types: &[usize],
        motif: &MotifSpec,
        motif_adj: &[Vec<bool>],
        adjacent: &dyn Fn(usize, usize) -> bool,
    ) -> bool {
        if i == assign.len() {
            return true;
        }
        for v in 0..types.len() {
            if used[v] || types[v] != motif.node_types[i] {
                continue;
            }
            if (0..i).any(|j| motif_adj[i][j] && !adjacent(assign[j], v)) {
                continue;
            }
            assign[i] = v;
            used[v] = true;
            if extend(i + 1, assign, used, types, motif, motif_adj, adjacent) {
                return true;
            }
            used[v] = false;
        }
        false
    }

    Ok(extend(0, &mut assign, &mut used, types, motif, &motif_adj, &adjacent))
}
