use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explain::{Attribution, AttributionKind};
use crate::graph::Graph;

use super::stats::mean;

/// Indices of the `k` largest scores; ties go to the lower index.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]).then(i.cmp(&j)));
    order.truncate(k);
    order
}

/// `|top_k ∩ gt| / k` with `k = |gt|`.
pub fn precision_at_k(scores: &[f64], gt: &[usize]) -> Result<f64> {
    if gt.is_empty() {
        return Err(Error::Empty("ground truth"));
    }
    if gt.iter().any(|&i| i >= scores.len()) {
        return Err(Error::Shape(format!("ground-truth index out of range for {} scores", scores.len())));
    }
    let k = gt.len();
    let hits = top_k(scores, k).iter().filter(|i| gt.contains(i)).count();
    Ok(hits as f64 / k as f64)
}

/// Ground-truth item indices for an attribution on `g`.
fn ground_truth_for(a: &Attribution, g: &Graph) -> Result<Vec<usize>> {
    match a.kind {
        AttributionKind::Edge => {
            let edges = match a.node {
                Some(v) => g.node_ground_truth_edges(v).ok_or(Error::MissingGroundTruth("edges"))?,
                None => g.ground_truth_edges().ok_or(Error::MissingGroundTruth("edges"))?.to_vec(),
            };
            let index = g.edge_index();
            Ok(edges.iter().map(|e| index[e]).collect())
        }
        AttributionKind::Node | AttributionKind::NodeFeature => {
            if let (Some(v), Some(ids)) = (a.node, g.motif_ids()) {
                let m = ids[v].ok_or(Error::MissingGroundTruth("nodes"))?;
                return Ok((0..ids.len()).filter(|&u| ids[u] == Some(m)).collect());
            }
            Ok(g.ground_truth_nodes().ok_or(Error::MissingGroundTruth("nodes"))?.to_vec())
        }
    }
}

/// Precision of `a` against the planted ground truth of `g`. For node-level
/// attributions the ground truth is restricted to the target node's motif.
pub fn precision_at_gt(a: &Attribution, g: &Graph) -> Result<PrecisionSample> {
    let gt = ground_truth_for(a, g)?;
    if gt.is_empty() {
        return Err(Error::MissingGroundTruth(match a.kind {
            AttributionKind::Edge => "edges",
            _ => "nodes",
        }));
    }
    Ok(PrecisionSample {
        instance: a.node.unwrap_or(0),
        k: gt.len(),
        precision: precision_at_k(&a.scores, &gt)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionSample {
    pub instance: usize,
    pub k: usize,
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionResult {
    pub samples: Vec<PrecisionSample>,
    pub mean: f64,
}

impl PrecisionResult {
    pub fn from_samples(samples: Vec<PrecisionSample>) -> Self {
        let vals: Vec<f64> = samples.iter().map(|s| s.precision).collect();
        Self { mean: mean(&vals), samples }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn definition_cases() {
        assert_eq!(precision_at_k(&[0.9, 0.8, 0.1], &[0, 1]).unwrap(), 1.0);
        // e1 > e2 > e3 with GT {e1, e3}.
        assert_eq!(precision_at_k(&[0.9, 0.5, 0.2], &[0, 2]).unwrap(), 0.5);
        assert!(precision_at_k(&[0.5], &[]).is_err());
    }

    #[test]
    fn ties_go_to_lower_index() {
        assert_eq!(top_k(&[0.5, 0.5, 0.5], 2), vec![0, 1]);
        assert_eq!(precision_at_k(&[0.5, 0.5, 0.5], &[2]).unwrap(), 0.0);
    }
}
