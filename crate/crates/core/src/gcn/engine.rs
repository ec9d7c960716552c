//! Forward pass and hand-written reverse-mode gradients.
//!
//! Graph task:
//! ```text
//! X1 = ReLU(Â X0 W1)      X2 = ReLU(Â X1 W2)
//! r  = mean_rows(X2)      logits = r · Wh + bh
//! ```
//! Node task: `X1 = ReLU(Â X0 W1)`, `logits = Â X1 W2`.
//!
//! With a mask `M`, every `Â` above is `Â ⊙ M`. An injection adds `δ` to the
//! post-activation `X0` or `X1` before the following aggregation. ReLU has
//! derivative 0 at 0.

use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{normalize_adjacency, Graph, Task};
use crate::numeric::{dot, Matrix};

use super::params::ModelParams;

/// Normalized adjacency and node features, the only graph data a forward
/// pass needs.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnInput {
    pub adj: Matrix,
    pub features: Matrix,
}

impl GcnInput {
    pub fn new(adj: Matrix, features: Matrix) -> Result<Self> {
        let n = adj.rows();
        if adj.cols() != n || features.rows() != n {
            return Err(Error::Shape(format!(
                "adjacency {}x{} with features {}x{}",
                adj.rows(),
                adj.cols(),
                features.rows(),
                features.cols()
            )));
        }
        Ok(Self { adj, features })
    }

    pub fn from_graph(g: &Graph) -> Self {
        Self {
            adj: normalize_adjacency(g),
            features: g.features().clone(),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.adj.rows()
    }

    /// Restriction to `nodes` (sorted or not), keeping the full-graph
    /// normalization constants.
    pub fn restrict(&self, nodes: &[usize]) -> GcnInput {
        GcnInput {
            adj: self.adj.principal_submatrix(nodes),
            features: self.features.select_rows(nodes),
        }
    }
}

/// Node embedding that adversarial perturbations may target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    /// Input features `X0`.
    X0,
    /// Output of the first convolution, `X1` (the penultimate embedding of
    /// the two-layer model).
    Penultimate,
}

impl Layer {
    pub fn index(self) -> usize {
        match self {
            Layer::X0 => 0,
            Layer::Penultimate => 1,
        }
    }

    pub fn from_index(i: usize) -> Result<Layer> {
        match i {
            0 => Ok(Layer::X0),
            1 => Ok(Layer::Penultimate),
            _ => Err(Error::InvalidLayer(i)),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Layer::X0 => "X0",
            Layer::Penultimate => "X1",
        }
    }
}

/// Additive perturbation `δ` applied to `X_layer`.
#[derive(Debug, Clone, PartialEq)]
pub struct Injection {
    pub layer: Layer,
    pub delta: Matrix,
}

/// Everything the backward pass needs, recorded by [`forward`].
#[derive(Debug, Clone)]
pub struct ForwardCache<'a> {
    pub params: &'a ModelParams,
    /// Unmasked normalized adjacency.
    pub base_adj: &'a Matrix,
    /// Adjacency actually used for aggregation (masked when a mask was given).
    pub adj: Cow<'a, Matrix>,
    pub masked: bool,
    /// Input features after any layer-0 injection.
    pub x0: Cow<'a, Matrix>,
    pub ax0: Matrix,
    pub z1: Matrix,
    /// Post-ReLU first-layer output, before any injection.
    pub x1: Matrix,
    /// `x1` plus any layer-1 injection; what the second layer aggregates.
    pub x1_in: Matrix,
    pub ax1: Matrix,
    pub z2: Matrix,
    /// Graph task only.
    pub x2: Option<Matrix>,
    /// Graph task only, `1 x h`.
    pub readout: Option<Matrix>,
    /// `1 x C` (graph task) or `n x C` (node task).
    pub logits: Matrix,
}

impl ForwardCache<'_> {
    pub fn num_nodes(&self) -> usize {
        self.adj.rows()
    }

    /// Output of the last convolution: `X2` (graph task) or `X1` (node task).
    pub fn last_conv(&self) -> &Matrix {
        self.x2.as_ref().unwrap_or(&self.x1_in)
    }

    /// Embedding at layer index 0, 1 (and 2 for graph models), as consumed by
    /// the next layer.
    pub fn embedding(&self, layer: usize) -> Result<&Matrix> {
        match layer {
            0 => Ok(&self.x0),
            1 => Ok(&self.x1_in),
            2 => self.x2.as_ref().ok_or(Error::InvalidLayer(2)),
            _ => Err(Error::InvalidLayer(layer)),
        }
    }

    /// Row of logits for instance `node` (ignored for graph models).
    pub fn logit_row(&self, node: Option<usize>) -> &[f64] {
        match (self.params.task, node) {
            (Task::NodeClassification, Some(v)) => self.logits.row(v),
            _ => self.logits.row(0),
        }
    }
}

fn relu(m: &Matrix) -> Matrix {
    m.map(|v| if v > 0.0 { v } else { 0.0 })
}

fn relu_backward(grad: &Matrix, pre: &Matrix) -> Matrix {
    let mut out = grad.clone();
    for (g, &z) in out.as_mut_slice().iter_mut().zip(pre.as_slice()) {
        if z <= 0.0 {
            *g = 0.0;
        }
    }
    out
}

/// Runs the model on `input`.
pub fn forward<'a>(
    params: &'a ModelParams,
    input: &'a GcnInput,
    mask: Option<&Matrix>,
    inject: Option<&Injection>,
) -> Result<ForwardCache<'a>> {
    params.validate()?;
    let n = input.num_nodes();
    let d = input.features.cols();
    if d != params.input_dim() {
        return Err(Error::Shape(format!(
            "features have {d} columns, model expects {}",
            params.input_dim()
        )));
    }
    let adj: Cow<'a, Matrix> = match mask {
        None => Cow::Borrowed(&input.adj),
        Some(m) => {
            if m.shape() != (n, n) {
                return Err(Error::Shape(format!(
                    "mask is {}x{}, graph has {n} nodes",
                    m.rows(),
                    m.cols()
                )));
            }
            Cow::Owned(input.adj.hadamard(m)?)
        }
    };
    let check_delta = |delta: &Matrix, expect: (usize, usize)| -> Result<()> {
        if delta.shape() != expect {
            return Err(Error::Shape(format!(
                "injection {}x{} does not match embedding {}x{}",
                delta.rows(),
                delta.cols(),
                expect.0,
                expect.1
            )));
        }
        Ok(())
    };

    let x0: Cow<'a, Matrix> = match inject {
        Some(inj) if inj.layer == Layer::X0 => {
            check_delta(&inj.delta, (n, d))?;
            Cow::Owned(input.features.add(&inj.delta)?)
        }
        _ => Cow::Borrowed(&input.features),
    };
    let ax0 = adj.matmul(&x0)?;
    let z1 = ax0.matmul(&params.w1)?;
    let x1 = relu(&z1);
    let x1_in = match inject {
        Some(inj) if inj.layer == Layer::Penultimate => {
            check_delta(&inj.delta, x1.shape())?;
            x1.add(&inj.delta)?
        }
        _ => x1.clone(),
    };
    let ax1 = adj.matmul(&x1_in)?;
    let z2 = ax1.matmul(&params.w2)?;

    let (x2, readout, logits) = match &params.head {
        Some(head) => {
            let x2 = relu(&z2);
            let readout = x2.column_mean();
            let mut logits = readout.matmul(&head.weight)?;
            for (l, b) in logits.as_mut_slice().iter_mut().zip(&head.bias) {
                *l += b;
            }
            (Some(x2), Some(readout), logits)
        }
        None => (None, None, z2.clone()),
    };

    Ok(ForwardCache {
        params,
        base_adj: &input.adj,
        adj,
        masked: mask.is_some(),
        x0,
        ax0,
        z1,
        x1,
        x1_in,
        ax1,
        z2,
        x2,
        readout,
        logits,
    })
}

/// Classification target for the cross-entropy loss.
#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    Graph(usize),
    /// Mean loss over `nodes`, with `labels` indexed by node.
    Nodes { labels: &'a [usize], nodes: &'a [usize] },
}

fn log_softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
    row.iter().map(|&v| v - lse).collect()
}

pub fn softmax(row: &[f64]) -> Vec<f64> {
    log_softmax(row).into_iter().map(f64::exp).collect()
}

fn check_class(c: usize, num_classes: usize) -> Result<()> {
    if c >= num_classes {
        return Err(Error::ClassOutOfRange { class: c, num_classes });
    }
    Ok(())
}

/// Softmax cross-entropy and its gradient with respect to the logits.
pub fn loss_and_logit_grad(cache: &ForwardCache<'_>, target: &Target<'_>) -> Result<(f64, Matrix)> {
    let num_classes = cache.logits.cols();
    let mut grad = Matrix::zeros(cache.logits.rows(), num_classes);
    match (*target, cache.params.task) {
        (Target::Graph(c), Task::GraphClassification) => {
            check_class(c, num_classes)?;
            let ls = log_softmax(cache.logits.row(0));
            for (k, g) in grad.row_mut(0).iter_mut().enumerate() {
                *g = ls[k].exp() - if k == c { 1.0 } else { 0.0 };
            }
            Ok((-ls[c], grad))
        }
        (Target::Nodes { labels, nodes }, Task::NodeClassification) => {
            if nodes.is_empty() {
                return Err(Error::Empty("node index set"));
            }
            if labels.len() != cache.logits.rows() {
                return Err(Error::Shape(format!(
                    "{} labels for {} nodes",
                    labels.len(),
                    cache.logits.rows()
                )));
            }
            let scale = 1.0 / nodes.len() as f64;
            let mut total = 0.0;
            for &v in nodes {
                if v >= labels.len() {
                    return Err(Error::Shape(format!("node {v} out of range")));
                }
                let c = labels[v];
                check_class(c, num_classes)?;
                let ls = log_softmax(cache.logits.row(v));
                total -= ls[c];
                for (k, g) in grad.row_mut(v).iter_mut().enumerate() {
                    *g += scale * (ls[k].exp() - if k == c { 1.0 } else { 0.0 });
                }
            }
            Ok((total * scale, grad))
        }
        _ => Err(Error::Mismatch("target kind does not match model task".into())),
    }
}

pub fn loss(cache: &ForwardCache<'_>, target: &Target<'_>) -> Result<f64> {
    loss_and_logit_grad(cache, target).map(|(l, _)| l)
}

/// Which gradients [`backward`] should produce.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Wants {
    pub params: bool,
    /// Gradient w.r.t. `X0` (after any layer-0 injection, so also w.r.t. `δ`).
    pub input: bool,
    /// Gradient w.r.t. the embedding at this layer index: 0 (`X0`), 1 (`X1`
    /// after injection) or, for graph models, 2 (`X2`).
    pub hidden: Option<usize>,
    /// Gradient w.r.t. every entry of the `n x n` mask (all-ones when the
    /// forward pass had none).
    pub mask: bool,
}

impl Wants {
    pub fn params() -> Self {
        Wants { params: true, ..Default::default() }
    }

    pub fn input() -> Self {
        Wants { input: true, ..Default::default() }
    }

    pub fn hidden(layer: usize) -> Self {
        Wants { hidden: Some(layer), ..Default::default() }
    }

    pub fn mask() -> Self {
        Wants { mask: true, ..Default::default() }
    }

    pub fn all(hidden: usize) -> Self {
        Wants { params: true, input: true, hidden: Some(hidden), mask: true }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GradientBundle {
    pub params: Option<ModelParams>,
    pub input: Option<Matrix>,
    pub hidden: Option<(usize, Matrix)>,
    pub mask: Option<Matrix>,
}

/// Gradients of the cross-entropy loss.
pub fn backward(cache: &ForwardCache<'_>, target: &Target<'_>, wants: Wants) -> Result<GradientBundle> {
    let (_, d_logits) = loss_and_logit_grad(cache, target)?;
    backward_from_logits(cache, &d_logits, wants)
}

/// Backpropagates an arbitrary upstream gradient on the logits.
pub fn backward_from_logits(
    cache: &ForwardCache<'_>,
    d_logits: &Matrix,
    wants: Wants,
) -> Result<GradientBundle> {
    let params = cache.params;
    if d_logits.shape() != cache.logits.shape() {
        return Err(Error::Shape(format!(
            "logit gradient {}x{} vs logits {}x{}",
            d_logits.rows(),
            d_logits.cols(),
            cache.logits.rows(),
            cache.logits.cols()
        )));
    }
    let graph_task = params.task == Task::GraphClassification;
    match wants.hidden {
        None | Some(0) | Some(1) => {}
        Some(2) if graph_task => {}
        Some(l) => return Err(Error::InvalidLayer(l)),
    }
    let need_mask = wants.mask;
    let need_layer1 = wants.params || wants.input || need_mask || matches!(wants.hidden, Some(0) | Some(1));
    let need_layer0 = wants.params || wants.input || need_mask || wants.hidden == Some(0);

    let mut out = GradientBundle::default();
    let mut grads = wants.params.then(|| params.zeros_like());
    let n = cache.num_nodes();

    let d_z2 = match &params.head {
        Some(head) => {
            let readout = cache.readout.as_ref().expect("graph cache has readout");
            if let Some(g) = grads.as_mut() {
                let gh = g.head.as_mut().expect("graph grads have head");
                gh.weight = readout.matmul_tn(d_logits)?;
                gh.bias.copy_from_slice(d_logits.row(0));
            }
            let d_readout = d_logits.matmul_nt(&head.weight)?;
            let mut d_x2 = Matrix::zeros(n, params.hidden_dim());
            let inv = 1.0 / n as f64;
            for i in 0..n {
                for (o, &g) in d_x2.row_mut(i).iter_mut().zip(d_readout.row(0)) {
                    *o = g * inv;
                }
            }
            if wants.hidden == Some(2) {
                out.hidden = Some((2, d_x2.clone()));
            }
            relu_backward(&d_x2, &cache.z2)
        }
        None => d_logits.clone(),
    };

    if need_layer1 {
        if let Some(g) = grads.as_mut() {
            g.w2 = cache.ax1.matmul_tn(&d_z2)?;
        }
        let g2 = d_z2.matmul_nt(&params.w2)?;
        let d_x1 = cache.adj.matmul_tn(&g2)?;
        let mut d_adj = need_mask.then(|| Matrix::zeros(n, n));
        if let Some(da) = d_adj.as_mut() {
            accumulate_adj_grad(da, cache.base_adj, &g2, &cache.x1_in);
        }
        if wants.hidden == Some(1) {
            out.hidden = Some((1, d_x1.clone()));
        }
        if need_layer0 {
            let d_z1 = relu_backward(&d_x1, &cache.z1);
            if let Some(g) = grads.as_mut() {
                g.w1 = cache.ax0.matmul_tn(&d_z1)?;
            }
            if wants.input || need_mask || wants.hidden == Some(0) {
                let g1 = d_z1.matmul_nt(&params.w1)?;
                if wants.input || wants.hidden == Some(0) {
                    let d_x0 = cache.adj.matmul_tn(&g1)?;
                    if wants.hidden == Some(0) {
                        out.hidden = Some((0, d_x0.clone()));
                    }
                    if wants.input {
                        out.input = Some(d_x0);
                    }
                }
                if let Some(da) = d_adj.as_mut() {
                    accumulate_adj_grad(da, cache.base_adj, &g1, &cache.x0);
                }
            }
        }
        out.mask = d_adj;
    }
    out.params = grads;
    Ok(out)
}

/// For `Z = (Â ⊙ M) X W` with `G = dZ Wᵀ`, adds `∂L/∂M[i][j] = Â[i][j] · (G[i] · X[j])`.
/// Entries where `Â` is zero have zero gradient and are skipped.
fn accumulate_adj_grad(d_mask: &mut Matrix, base_adj: &Matrix, g: &Matrix, x: &Matrix) {
    let n = base_adj.rows();
    for i in 0..n {
        let gi = g.row(i);
        for j in 0..n {
            let a = base_adj[(i, j)];
            if a != 0.0 {
                d_mask[(i, j)] += a * dot(gi, x.row(j));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Label;
    use crate::numeric::Rng;

    fn path_input(n: usize, d: usize, rng: &mut Rng) -> GcnInput {
        let edges = (1..n).map(|i| (i - 1, i)).collect();
        let feats = Matrix::from_vec(n, d, (0..n * d).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap();
        GcnInput::from_graph(&Graph::new(n, edges, feats, Label::Graph(0)).unwrap())
    }

    #[test]
    fn single_node_identity_layer() {
        let x = Matrix::from_rows(&[[0.5, 2.0, 0.0]]).unwrap();
        let g = Graph::new(1, vec![], x.clone(), Label::Graph(0)).unwrap();
        let input = GcnInput::from_graph(&g);
        let mut p = ModelParams::init(Task::GraphClassification, 3, 3, 2, &mut Rng::new(0)).unwrap();
        p.w1 = Matrix::identity(3);
        let cache = forward(&p, &input, None, None).unwrap();
        assert_eq!(cache.x1, x);
    }

    #[test]
    fn zero_injection_and_unit_mask_are_inert() {
        let mut rng = Rng::new(3);
        for task in [Task::GraphClassification, Task::NodeClassification] {
            let input = path_input(5, 3, &mut rng);
            let p = ModelParams::init(task, 3, 4, 2, &mut rng).unwrap();
            let base = forward(&p, &input, None, None).unwrap().logits;
            for (layer, cols) in [(Layer::X0, 3), (Layer::Penultimate, 4)] {
                let inj = Injection { layer, delta: Matrix::zeros(5, cols) };
                assert_eq!(forward(&p, &input, None, Some(&inj)).unwrap().logits, base);
            }
            let ones = Matrix::filled(5, 5, 1.0);
            assert_eq!(forward(&p, &input, Some(&ones), None).unwrap().logits, base);
        }
    }

    #[test]
    fn bad_shapes_rejected() {
        let mut rng = Rng::new(3);
        let input = path_input(4, 3, &mut rng);
        let p = ModelParams::init(Task::GraphClassification, 3, 4, 2, &mut rng).unwrap();
        assert!(forward(&p, &input, Some(&Matrix::zeros(3, 3)), None).is_err());
        let inj = Injection { layer: Layer::Penultimate, delta: Matrix::zeros(4, 3) };
        assert!(forward(&p, &input, None, Some(&inj)).is_err());
        let q = ModelParams::init(Task::GraphClassification, 2, 4, 2, &mut rng).unwrap();
        assert!(forward(&q, &input, None, None).is_err());
        assert!(matches!(Layer::from_index(2), Err(Error::InvalidLayer(2))));
    }

    #[test]
    fn uniform_logits_give_log_c() {
        let mut rng = Rng::new(1);
        let input = path_input(3, 2, &mut rng);
        let mut p = ModelParams::init(Task::GraphClassification, 2, 4, 3, &mut rng).unwrap();
        p.head.as_mut().unwrap().weight = Matrix::zeros(4, 3);
        let cache = forward(&p, &input, None, None).unwrap();
        let l = loss(&cache, &Target::Graph(1)).unwrap();
        assert!((l - 3f64.ln()).abs() < 1e-12);
        assert!(matches!(
            loss(&cache, &Target::Graph(3)),
            Err(Error::ClassOutOfRange { class: 3, .. })
        ));
    }

    #[test]
    fn large_margin_gives_small_loss() {
        let mut rng = Rng::new(1);
        let input = path_input(3, 2, &mut rng);
        let mut p = ModelParams::init(Task::GraphClassification, 2, 4, 2, &mut rng).unwrap();
        let head = p.head.as_mut().unwrap();
        head.weight = Matrix::zeros(4, 2);
        head.bias = vec![20.0, 0.0];
        let cache = forward(&p, &input, None, None).unwrap();
        assert!(loss(&cache, &Target::Graph(0)).unwrap() < 1e-3);
    }

    #[test]
    fn loss_matches_logsumexp_oracle() {
        let mut rng = Rng::new(12);
        for _ in 0..10 {
            let input = path_input(4, 3, &mut rng);
            let p = ModelParams::init(Task::NodeClassification, 3, 5, 3, &mut rng).unwrap();
            let cache = forward(&p, &input, None, None).unwrap();
            let labels = [0, 2, 1, 1];
            let nodes = [0, 1, 3];
            let got = loss(&cache, &Target::Nodes { labels: &labels, nodes: &nodes }).unwrap();
            let mut expect = 0.0;
            for &v in &nodes {
                let row = cache.logits.row(v);
                let lse = row.iter().map(|x| x.exp()).sum::<f64>().ln();
                expect += lse - row[labels[v]];
            }
            expect /= nodes.len() as f64;
            assert!((got - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn dead_feature_column_has_zero_gradient() {
        let mut rng = Rng::new(5);
        let input = path_input(5, 3, &mut rng);
        let mut p = ModelParams::init(Task::GraphClassification, 3, 4, 2, &mut rng).unwrap();
        for k in 0..4 {
            p.w1[(1, k)] = 0.0;
        }
        let cache = forward(&p, &input, None, None).unwrap();
        let g = backward(&cache, &Target::Graph(1), Wants::input()).unwrap();
        let gx = g.input.unwrap();
        for i in 0..5 {
            assert_eq!(gx[(i, 1)], 0.0);
        }
    }

    #[test]
    fn inactive_relu_units_have_zero_gradient() {
        let mut rng = Rng::new(5);
        let input = path_input(4, 2, &mut rng);
        let mut p = ModelParams::init(Task::NodeClassification, 2, 3, 2, &mut rng).unwrap();
        // Column 0 of W1 all zero: z1[:, 0] = 0 so the unit is inactive.
        for r in 0..2 {
            p.w1[(r, 0)] = 0.0;
        }
        let labels = [0, 1, 0, 1];
        let nodes = [0, 1, 2, 3];
        let cache = forward(&p, &input, None, None).unwrap();
        let g = backward(&cache, &Target::Nodes { labels: &labels, nodes: &nodes }, Wants::params()).unwrap();
        let gw1 = g.params.unwrap().w1;
        assert_eq!(gw1[(0, 0)], 0.0);
        assert_eq!(gw1[(1, 0)], 0.0);
    }

    #[test]
    fn hidden_layer_validation() {
        let mut rng = Rng::new(5);
        let input = path_input(4, 2, &mut rng);
        let p = ModelParams::init(Task::NodeClassification, 2, 3, 2, &mut rng).unwrap();
        let cache = forward(&p, &input, None, None).unwrap();
        let labels = [0, 1, 0, 1];
        let t = Target::Nodes { labels: &labels, nodes: &[0] };
        assert!(matches!(backward(&cache, &t, Wants::hidden(2)), Err(Error::InvalidLayer(2))));
        assert!(backward(&cache, &t, Wants::hidden(1)).is_ok());
    }

    #[test]
    fn forward_is_bit_deterministic() {
        let mut rng = Rng::new(9);
        let input = path_input(6, 3, &mut rng);
        let p = ModelParams::init(Task::GraphClassification, 3, 8, 2, &mut rng).unwrap();
        let a = forward(&p, &input, None, None).unwrap();
        let b = forward(&p, &input, None, None).unwrap();
        assert_eq!(a.logits, b.logits);
        assert_eq!(a.x2, b.x2);
    }
}
