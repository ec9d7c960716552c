//! Post-hoc attribution: vanilla gradients, GradCAM and GNN-Explainer.
//!
//! Every explainer treats the model as read-only and explains a single logit:
//! the predicted class of a graph, or of one node for node-level models,
//! unless the [`ExplainTarget`] overrides the class.

mod export;
mod gnnx;
mod gradient;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gcn::{forward, GcnInput, ModelParams};
use crate::graph::{Graph, Task};
use crate::numeric::Matrix;

pub use export::{attribution_record, color_ramp, to_dot, AttributionRecord};
pub use gnnx::gnn_explainer;
pub use gradient::{grad_cam, grad_cam_weights, vanilla_grad};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[serde(alias = "vg")]
    VanillaGrad,
    #[serde(alias = "gc")]
    GradCam,
    #[serde(alias = "gnnx")]
    GnnExplainer,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::VanillaGrad, Method::GradCam, Method::GnnExplainer];

    /// Short identifier used in file names and tables.
    pub fn id(self) -> &'static str {
        match self {
            Method::VanillaGrad => "vg",
            Method::GradCam => "gc",
            Method::GnnExplainer => "gnn_explainer",
        }
    }

    pub fn kind(self) -> AttributionKind {
        match self {
            Method::GnnExplainer => AttributionKind::Edge,
            _ => AttributionKind::Node,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "vg" | "vanilla_grad" | "vanilla_gradients" => Ok(Method::VanillaGrad),
            "gc" | "grad_cam" | "gradcam" => Ok(Method::GradCam),
            "gnn_explainer" | "gnnexplainer" | "gnnx" => Ok(Method::GnnExplainer),
            _ => Err(Error::config(
                "method",
                format!("unknown explainer '{s}'; valid methods: vg, gc, gnn_explainer"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributionKind {
    Node,
    NodeFeature,
    Edge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeReduce {
    #[default]
    SumAbs,
    L2,
}

impl NodeReduce {
    pub fn apply(self, row: &[f64]) -> f64 {
        match self {
            NodeReduce::SumAbs => row.iter().map(|v| v.abs()).sum(),
            NodeReduce::L2 => row.iter().map(|v| v * v).sum::<f64>().sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainerConfig {
    pub gnnx_iterations: usize,
    pub gnnx_lr: f64,
    /// Size penalty `α` on `Σ σ(m)`.
    pub gnnx_size_reg: f64,
    /// Entropy penalty `β` on `Σ H(σ(m))`.
    pub gnnx_entropy_reg: f64,
    /// Initial mask logit shared by every edge.
    pub mask_init: f64,
    pub node_reduce: NodeReduce,
}

impl Default for ExplainerConfig {
    fn default() -> Self {
        Self {
            gnnx_iterations: 100,
            gnnx_lr: 0.01,
            gnnx_size_reg: 0.005,
            gnnx_entropy_reg: 1.0,
            mask_init: 0.0,
            node_reduce: NodeReduce::SumAbs,
        }
    }
}

impl ExplainerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gnnx_size_reg >= 0.0) {
            return Err(Error::config("explainer.gnnx_size_reg", "must be >= 0"));
        }
        if !(self.gnnx_entropy_reg >= 0.0) {
            return Err(Error::config("explainer.gnnx_entropy_reg", "must be >= 0"));
        }
        if !(self.gnnx_lr > 0.0) || !self.gnnx_lr.is_finite() {
            return Err(Error::config("explainer.gnnx_lr", "must be positive"));
        }
        if !self.mask_init.is_finite() {
            return Err(Error::config("explainer.mask_init", "must be finite"));
        }
        Ok(())
    }
}

/// Which logit to explain. `node` is required for node-level models and
/// ignored otherwise; `class` defaults to the model's prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ExplainTarget {
    pub node: Option<usize>,
    pub class: Option<usize>,
}

impl ExplainTarget {
    pub fn graph() -> Self {
        Self::default()
    }

    pub fn node(v: usize) -> Self {
        Self { node: Some(v), class: None }
    }

    pub fn with_class(self, class: usize) -> Self {
        Self { class: Some(class), ..self }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub kind: AttributionKind,
    pub method: Method,
    /// Node scores (length `n`) or edge scores aligned with `Graph::edges`.
    pub scores: Vec<f64>,
    /// Per-feature map (`n x d`), vanilla gradients only.
    pub feature_scores: Option<Matrix>,
    pub class: usize,
    pub node: Option<usize>,
    pub model_fingerprint: String,
}

/// The logit row and class a target resolves to.
pub(crate) fn resolve_target(params: &ModelParams, input: &GcnInput, target: ExplainTarget) -> Result<(usize, usize)> {
    let n = input.num_nodes();
    let row = match params.task {
        Task::GraphClassification => 0,
        Task::NodeClassification => {
            let v = target
                .node
                .ok_or_else(|| Error::config("target.node", "node-level models need a target node"))?;
            if v >= n {
                return Err(Error::config("target.node", format!("node {v} out of range for {n} nodes")));
            }
            v
        }
    };
    let class = match target.class {
        Some(c) => {
            if c >= params.num_classes() {
                return Err(Error::ClassOutOfRange { class: c, num_classes: params.num_classes() });
            }
            c
        }
        None => {
            let cache = forward(params, input, None, None)?;
            argmax(cache.logits.row(row))
        }
    };
    Ok((row, class))
}

/// Index of the largest entry; ties go to the lower index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Runs `method` on `g`.
pub fn explain(
    method: Method,
    params: &ModelParams,
    g: &Graph,
    target: ExplainTarget,
    cfg: &ExplainerConfig,
) -> Result<Attribution> {
    let input = GcnInput::from_graph(g);
    explain_prepared(method, params, g, &input, target, cfg)
}

/// As [`explain`] with a precomputed [`GcnInput`] for `g`.
pub fn explain_prepared(
    method: Method,
    params: &ModelParams,
    g: &Graph,
    input: &GcnInput,
    target: ExplainTarget,
    cfg: &ExplainerConfig,
) -> Result<Attribution> {
    match method {
        Method::VanillaGrad => gradient::vanilla_grad_prepared(params, input, target, cfg.node_reduce),
        Method::GradCam => gradient::grad_cam_prepared(params, input, target),
        Method::GnnExplainer => gnnx::gnn_explainer_prepared(params, g, input, target, cfg),
    }
}
