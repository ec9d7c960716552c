use crate::error::Result;
use crate::gcn::{backward_from_logits, forward, ForwardCache, GcnInput, ModelParams, Wants};
use crate::graph::{Graph, Task};
use crate::numeric::Matrix;

use super::{resolve_target, Attribution, AttributionKind, ExplainTarget, Method, NodeReduce};

fn one_hot_logit_grad(cache: &ForwardCache<'_>, row: usize, class: usize) -> Matrix {
    let mut d = Matrix::zeros(cache.logits.rows(), cache.logits.cols());
    d[(row, class)] = 1.0;
    d
}

/// `|∂ logit / ∂X0|` per entry, reduced per node with `reduce`.
pub fn vanilla_grad(params: &ModelParams, g: &Graph, target: ExplainTarget, reduce: NodeReduce) -> Result<Attribution> {
    vanilla_grad_prepared(params, &GcnInput::from_graph(g), target, reduce)
}

pub(crate) fn vanilla_grad_prepared(
    params: &ModelParams,
    input: &GcnInput,
    target: ExplainTarget,
    reduce: NodeReduce,
) -> Result<Attribution> {
    let (row, class) = resolve_target(params, input, target)?;
    let cache = forward(params, input, None, None)?;
    let d = one_hot_logit_grad(&cache, row, class);
    let grad = backward_from_logits(&cache, &d, Wants::input())?
        .input
        .expect("requested input gradient");
    let fmap = grad.map(f64::abs);
    let scores = (0..fmap.rows()).map(|v| reduce.apply(fmap.row(v))).collect();
    Ok(Attribution {
        kind: AttributionKind::Node,
        method: Method::VanillaGrad,
        scores,
        feature_scores: Some(fmap),
        class,
        node: target.node.filter(|_| params.task == Task::NodeClassification),
        model_fingerprint: params.fingerprint(),
    })
}

fn last_conv_index(params: &ModelParams) -> usize {
    match params.task {
        Task::GraphClassification => 2,
        Task::NodeClassification => 1,
    }
}

/// Channel weights and last-convolution activations for GradCAM.
fn cam_parts(params: &ModelParams, input: &GcnInput, row: usize, class: usize) -> Result<(Vec<f64>, Matrix)> {
    let cache = forward(params, input, None, None)?;
    let d = one_hot_logit_grad(&cache, row, class);
    let layer = last_conv_index(params);
    let (_, g) = backward_from_logits(&cache, &d, Wants::hidden(layer))?
        .hidden
        .expect("requested hidden gradient");
    let weights = g.column_mean().into_vec();
    Ok((weights, cache.last_conv().clone()))
}

/// GradCAM channel weights `α_k`: the node-averaged gradient of the target
/// logit with respect to channel `k` of the last convolution output.
pub fn grad_cam_weights(params: &ModelParams, g: &Graph, target: ExplainTarget) -> Result<Vec<f64>> {
    let input = GcnInput::from_graph(g);
    let (row, class) = resolve_target(params, &input, target)?;
    Ok(cam_parts(params, &input, row, class)?.0)
}

/// Node score `ReLU(Σ_k α_k · X_last[v, k])`.
pub fn grad_cam(params: &ModelParams, g: &Graph, target: ExplainTarget) -> Result<Attribution> {
    grad_cam_prepared(params, &GcnInput::from_graph(g), target)
}

pub(crate) fn grad_cam_prepared(params: &ModelParams, input: &GcnInput, target: ExplainTarget) -> Result<Attribution> {
    let (row, class) = resolve_target(params, input, target)?;
    let (weights, acts) = cam_parts(params, input, row, class)?;
    let scores = (0..acts.rows())
        .map(|v| {
            let s: f64 = acts.row(v).iter().zip(&weights).map(|(x, a)| x * a).sum();
            s.max(0.0)
        })
        .collect();
    Ok(Attribution {
        kind: AttributionKind::Node,
        method: Method::GradCam,
        scores,
        feature_scores: None,
        class,
        node: target.node.filter(|_| params.task == Task::NodeClassification),
        model_fingerprint: params.fingerprint(),
    })
}
