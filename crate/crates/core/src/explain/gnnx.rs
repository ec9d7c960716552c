//! Edge-mask optimization.
//!
//! One logit `m_e` per undirected edge; both directions of the edge share
//! `σ(m_e)` in the mask, so symmetry holds by construction. Self-loops stay
//! unmasked. The objective is
//!
//! ```text
//! -log p_c(Â ⊙ M) + α Σ_e σ(m_e) + β Σ_e H(σ(m_e))
//! ```
//!
//! For node-level models only the 2-hop neighbourhood of the target node can
//! influence its logit, so the masked forward pass runs on that subgraph
//! (with full-graph normalization, which makes it exact). Every other edge
//! sees only the regularizers and follows the same trajectory from the same
//! initial logit, which is tracked once.

use std::borrow::Cow;

use crate::error::{Error, Result};
use crate::gcn::{backward_from_logits, forward, GcnInput, ModelParams, Wants};
use crate::graph::{Graph, Task};
use crate::numeric::Matrix;

use super::{resolve_target, Attribution, AttributionKind, ExplainTarget, ExplainerConfig, Method};

const LOGIT_CLAMP: f64 = 30.0;
const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Binary entropy of `σ(m)` in nats.
fn entropy(m: f64) -> f64 {
    let p = sigmoid(m);
    p * softplus(-m) + (1.0 - p) * softplus(m)
}

/// Regularizer value and its derivative with respect to the logit.
fn regularizer(m: f64, alpha: f64, beta: f64) -> (f64, f64) {
    let p = sigmoid(m);
    let dp = p * (1.0 - p);
    (alpha * p + beta * entropy(m), alpha * dp - beta * m * dp)
}

#[derive(Clone, Copy, Default)]
struct AdamSlot {
    m: f64,
    v: f64,
}

impl AdamSlot {
    fn step(&mut self, x: &mut f64, g: f64, lr: f64, t: i32) {
        self.m = BETA1 * self.m + (1.0 - BETA1) * g;
        self.v = BETA2 * self.v + (1.0 - BETA2) * g * g;
        let mh = self.m / (1.0 - BETA1.powi(t));
        let vh = self.v / (1.0 - BETA2.powi(t));
        *x = (*x - lr * mh / (vh.sqrt() + ADAM_EPS)).clamp(-LOGIT_CLAMP, LOGIT_CLAMP);
    }
}

/// Learns an edge mask that preserves the model's prediction on `g`.
/// Scores are `σ(m_e)` aligned with `g.edges()`.
pub fn gnn_explainer(
    params: &ModelParams,
    g: &Graph,
    target: ExplainTarget,
    cfg: &ExplainerConfig,
) -> Result<Attribution> {
    gnn_explainer_prepared(params, g, &GcnInput::from_graph(g), target, cfg)
}

pub(crate) fn gnn_explainer_prepared(
    params: &ModelParams,
    g: &Graph,
    input: &GcnInput,
    target: ExplainTarget,
    cfg: &ExplainerConfig,
) -> Result<Attribution> {
    cfg.validate()?;
    let (row, class) = resolve_target(params, input, target)?;
    let n = g.num_nodes();

    // Local region the masked forward pass runs on.
    let (local_input, local_of, local_row): (Cow<'_, GcnInput>, Vec<Option<usize>>, usize) = match params.task {
        Task::GraphClassification => (Cow::Borrowed(input), (0..n).map(Some).collect(), row),
        Task::NodeClassification => {
            let region = g.k_hop_nodes(row, 2);
            let mut local_of = vec![None; n];
            for (i, &v) in region.iter().enumerate() {
                local_of[v] = Some(i);
            }
            let r = local_of[row].expect("centre is in its own neighbourhood");
            (Cow::Owned(input.restrict(&region)), local_of, r)
        }
    };
    let ln = local_input.num_nodes();
    // (edge id, local endpoints) for edges inside the region.
    let local_edges: Vec<(usize, usize, usize)> = g
        .edges()
        .iter()
        .enumerate()
        .filter_map(|(e, &(a, b))| Some((e, local_of[a]?, local_of[b]?)))
        .collect();
    let outside = g.edges().len() - local_edges.len();

    let (alpha, beta) = (cfg.gnnx_size_reg, cfg.gnnx_entropy_reg);
    let mut logits = vec![cfg.mask_init; local_edges.len()];
    let mut slots = vec![AdamSlot::default(); local_edges.len()];
    let mut phantom = cfg.mask_init;
    let mut phantom_slot = AdamSlot::default();
    let mut mask = Matrix::filled(ln, ln, 1.0);

    for it in 1..=cfg.gnnx_iterations {
        for (k, &(_, a, b)) in local_edges.iter().enumerate() {
            let s = sigmoid(logits[k]);
            mask[(a, b)] = s;
            mask[(b, a)] = s;
        }
        let cache = forward(params, &local_input, Some(&mask), None)?;
        let z = cache.logits.row(local_row);
        let zmax = z.iter().fold(f64::NEG_INFINITY, |acc, &v| acc.max(v));
        let lse = zmax + z.iter().map(|&v| (v - zmax).exp()).sum::<f64>().ln();
        let mut objective = lse - z[class];

        let mut d_logits = Matrix::zeros(cache.logits.rows(), cache.logits.cols());
        for (c, &v) in z.iter().enumerate() {
            d_logits[(local_row, c)] = (v - lse).exp() - if c == class { 1.0 } else { 0.0 };
        }
        let d_mask = backward_from_logits(&cache, &d_logits, Wants::mask())?
            .mask
            .expect("requested mask gradient");

        let mut grads = Vec::with_capacity(local_edges.len());
        for (k, &(_, a, b)) in local_edges.iter().enumerate() {
            let s = sigmoid(logits[k]);
            let (r, dr) = regularizer(logits[k], alpha, beta);
            objective += r;
            grads.push((d_mask[(a, b)] + d_mask[(b, a)]) * s * (1.0 - s) + dr);
        }
        let (r, phantom_grad) = regularizer(phantom, alpha, beta);
        objective += r * outside as f64;
        if !objective.is_finite() || grads.iter().any(|v| !v.is_finite()) {
            return Err(Error::ExplainerDiverged { iteration: it });
        }

        let t = it as i32;
        for ((x, slot), &gk) in logits.iter_mut().zip(&mut slots).zip(&grads) {
            slot.step(x, gk, cfg.gnnx_lr, t);
        }
        phantom_slot.step(&mut phantom, phantom_grad, cfg.gnnx_lr, t);
    }

    let mut scores = vec![sigmoid(phantom); g.edges().len()];
    for (k, &(e, _, _)) in local_edges.iter().enumerate() {
        scores[e] = sigmoid(logits[k]);
    }
    Ok(Attribution {
        kind: AttributionKind::Edge,
        method: Method::GnnExplainer,
        scores,
        feature_scores: None,
        class,
        node: (params.task == Task::NodeClassification).then_some(row),
        model_fingerprint: params.fingerprint(),
    })
}
