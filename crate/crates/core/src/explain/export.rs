use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::graph::Graph;

use super::{Attribution, AttributionKind, Method};

/// Plain-text (JSON) form of one attribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionRecord {
    pub graph_id: usize,
    pub method: Method,
    pub kind: AttributionKind,
    pub class: usize,
    pub node: Option<usize>,
    pub model_fingerprint: String,
    pub scores: Vec<f64>,
    /// Edge list the scores align with, for edge attributions.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<(usize, usize)>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feature_scores: Option<Vec<Vec<f64>>>,
}

pub fn attribution_record(graph_id: usize, g: &Graph, a: &Attribution) -> AttributionRecord {
    AttributionRecord {
        graph_id,
        method: a.method,
        kind: a.kind,
        class: a.class,
        node: a.node,
        model_fingerprint: a.model_fingerprint.clone(),
        scores: a.scores.clone(),
        edges: (a.kind == AttributionKind::Edge).then(|| g.edges().to_vec()),
        feature_scores: a.feature_scores.as_ref().map(|m| m.to_rows()),
    }
}

const LOW: (f64, f64, f64) = (255.0, 105.0, 180.0);
const HIGH: (f64, f64, f64) = (255.0, 255.0, 0.0);

/// Pink at `t = 0` to yellow at `t = 1`, as `#rrggbb`.
pub fn color_ramp(t: f64) -> String {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let mix = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(LOW.0, HIGH.0), mix(LOW.1, HIGH.1), mix(LOW.2, HIGH.2))
}

/// Min-max scaling to `[0, 1]`; a constant vector maps to zeros.
fn unit_scale(scores: &[f64]) -> Vec<f64> {
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0.0; scores.len()];
    }
    scores.iter().map(|s| (s - lo) / (hi - lo)).collect()
}

/// Undirected DOT rendering. Node attributions colour nodes, edge
/// attributions colour edges; yellow marks the most important items.
pub fn to_dot(name: &str, g: &Graph, a: &Attribution) -> String {
    let mut out = String::new();
    let esc = name.replace('\\', "\\\\").replace('"', "\\\"");
    let _ = writeln!(out, "graph \"{esc}\" {{");
    let _ = writeln!(
        out,
        "  graph [label=\"{} class {}{}\"];",
        a.method,
        a.class,
        a.node.map(|v| format!(" node {v}")).unwrap_or_default()
    );
    let _ = writeln!(out, "  node [shape=circle, style=filled, fontsize=10];");
    let scaled = unit_scale(&a.scores);
    let node_scores = a.kind != AttributionKind::Edge;
    for v in 0..g.num_nodes() {
        let fill = if node_scores { color_ramp(scaled[v]) } else { "#ffffff".to_string() };
        let mut attrs = format!("label=\"{v}\", fillcolor=\"{fill}\"");
        if node_scores {
            let _ = write!(attrs, ", tooltip=\"{:.6e}\"", a.scores[v]);
        }
        if a.node == Some(v) {
            attrs.push_str(", penwidth=3");
        }
        let _ = writeln!(out, "  {v} [{attrs}];");
    }
    for (e, &(u, v)) in g.edges().iter().enumerate() {
        if node_scores {
            let _ = writeln!(out, "  {u} -- {v} [color=\"#999999\"];");
        } else {
            let _ = writeln!(
                out,
                "  {u} -- {v} [color=\"{}\", penwidth={:.2}, tooltip=\"{:.6e}\"];",
                color_ramp(scaled[e]),
                1.0 + 3.0 * scaled[e],
                a.scores[e]
            );
        }
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_endpoints() {
        assert_eq!(color_ramp(0.0), "#ff69b4");
        assert_eq!(color_ramp(1.0), "#ffff00");
        assert_eq!(color_ramp(f64::NAN), "#ff69b4");
    }

    #[test]
    fn constant_scores_scale_to_zero() {
        assert_eq!(unit_scale(&[2.0, 2.0]), vec![0.0, 0.0]);
        assert_eq!(unit_scale(&[1.0, 3.0, 2.0]), vec![0.0, 1.0, 0.5]);
    }
}
