//! Test-only oracles shared by integration suites. Nothing here calls the
//! engine's backward pass.
#![allow(dead_code)]

use std::collections::BTreeSet;

use advgnn::gcn::{forward, loss, GcnInput, Injection, Layer, ModelParams, Target};
use advgnn::graph::{Graph, Label, Task};
use advgnn::numeric::{Matrix, Rng};

pub const FD_STEP: f64 = 1e-5;
/// Relative error is `|a - n| / max(|a|, |n|, REL_FLOOR)`; the floor keeps
/// near-zero gradients from dividing round-off by round-off.
pub const REL_FLOOR: f64 = 1e-6;

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

pub struct Instance {
    pub task: Task,
    pub params: ModelParams,
    pub graph: Graph,
    pub input: GcnInput,
    pub labels: Vec<usize>,
    pub nodes: Vec<usize>,
    pub mask: Matrix,
}

impl Instance {
    pub fn target(&self) -> Target<'_> {
        match self.task {
            Task::GraphClassification => Target::Graph(self.labels[0]),
            Task::NodeClassification => Target::Nodes { labels: &self.labels, nodes: &self.nodes },
        }
    }
}

pub fn random_graph(n: usize, d: usize, rng: &mut Rng) -> (usize, Vec<(usize, usize)>, Matrix) {
    let mut edges = BTreeSet::new();
    for v in 1..n {
        let u = rng.below(v);
        edges.insert((u, v));
    }
    for _ in 0..rng.below(n) {
        let (a, b) = (rng.below(n), rng.below(n));
        if a != b {
            edges.insert((a.min(b), a.max(b)));
        }
    }
    let feats = Matrix::from_vec(n, d, (0..n * d).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap();
    (n, edges.into_iter().collect(), feats)
}

/// Random small instance; `n ≤ 8`, `d ≤ 5`.
pub fn random_instance(task: Task, rng: &mut Rng) -> Instance {
    let n = 3 + rng.below(6);
    let d = 2 + rng.below(4);
    let h = 3 + rng.below(4);
    let c = 2 + rng.below(2);
    let (n, edges, feats) = random_graph(n, d, rng);
    let labels: Vec<usize> = match task {
        Task::GraphClassification => vec![rng.below(c)],
        Task::NodeClassification => (0..n).map(|_| rng.below(c)).collect(),
    };
    let label = match task {
        Task::GraphClassification => Label::Graph(labels[0]),
        Task::NodeClassification => Label::Nodes(labels.clone()),
    };
    let graph = Graph::new(n, edges, feats, label).unwrap();
    let mut params = ModelParams::init(task, d, h, c, rng).unwrap();
    if let Some(head) = params.head.as_mut() {
        for b in &mut head.bias {
            *b = rng.uniform(-0.5, 0.5);
        }
    }
    let nodes: Vec<usize> = (0..n).filter(|_| rng.bernoulli(0.7)).collect();
    let nodes = if nodes.is_empty() { vec![0] } else { nodes };
    let mut mask = Matrix::filled(n, n, 1.0);
    for &(a, b) in graph.edges() {
        let m = rng.uniform(0.2, 1.0);
        mask[(a, b)] = m;
        mask[(b, a)] = m;
    }
    let input = GcnInput::from_graph(&graph);
    Instance { task, params, graph, input, labels, nodes, mask }
}

/// Loss with an explicit layer-1 injection `delta1` and mask.
pub fn eval_loss(inst: &Instance, params: &ModelParams, input: &GcnInput, mask: &Matrix, delta1: &Matrix) -> f64 {
    let inj = Injection { layer: Layer::Penultimate, delta: delta1.clone() };
    let cache = forward(params, input, Some(mask), Some(&inj)).unwrap();
    loss(&cache, &inst.target()).unwrap()
}

/// ReLU activation pattern of both layers; finite differences are only
/// meaningful when every probe keeps this pattern.
pub fn relu_pattern(params: &ModelParams, input: &GcnInput, mask: &Matrix, delta1: &Matrix) -> Vec<bool> {
    let inj = Injection { layer: Layer::Penultimate, delta: delta1.clone() };
    let cache = forward(params, input, Some(mask), Some(&inj)).unwrap();
    let mut p: Vec<bool> = cache.z1.as_slice().iter().map(|&z| z > 0.0).collect();
    if params.task == Task::GraphClassification {
        p.extend(cache.z2.as_slice().iter().map(|&z| z > 0.0));
    }
    p
}

/// Central-difference gradients of the loss w.r.t. every parameter buffer,
/// `X0`, the layer-1 embedding and every mask entry. Returns `None` when some
/// probe crosses a ReLU kink.
pub struct FdGrads {
    pub params: Vec<Vec<f64>>,
    pub x0: Matrix,
    pub x1: Matrix,
    pub mask: Matrix,
}

pub fn finite_differences(inst: &Instance) -> Option<FdGrads> {
    let n = inst.graph.num_nodes();
    let h = inst.params.hidden_dim();
    let zero1 = Matrix::zeros(n, h);
    let base_pattern = relu_pattern(&inst.params, &inst.input, &inst.mask, &zero1);
    let mut kink = false;

    let mut central = |f: &mut dyn FnMut(f64) -> (f64, Vec<bool>)| -> f64 {
        let (lp, pp) = f(FD_STEP);
        let (lm, pm) = f(-FD_STEP);
        if pp != base_pattern || pm != base_pattern {
            kink = true;
        }
        (lp - lm) / (2.0 * FD_STEP)
    };

    let mut params_fd = Vec::new();
    let buf_lens: Vec<usize> = inst.params.buffers().iter().map(|b| b.len()).collect();
    for (bi, &len) in buf_lens.iter().enumerate() {
        let mut g = vec![0.0; len];
        for (k, slot) in g.iter_mut().enumerate() {
            *slot = central(&mut |s| {
                let mut p = inst.params.clone();
                p.buffers_mut()[bi][k] += s;
                (
                    eval_loss(inst, &p, &inst.input, &inst.mask, &zero1),
                    relu_pattern(&p, &inst.input, &inst.mask, &zero1),
                )
            });
        }
        params_fd.push(g);
    }

    let d = inst.input.features.cols();
    let mut x0 = Matrix::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            x0[(i, j)] = central(&mut |s| {
                let mut inp = inst.input.clone();
                inp.features[(i, j)] += s;
                (
                    eval_loss(inst, &inst.params, &inp, &inst.mask, &zero1),
                    relu_pattern(&inst.params, &inp, &inst.mask, &zero1),
                )
            });
        }
    }

    let mut x1 = Matrix::zeros(n, h);
    for i in 0..n {
        for j in 0..h {
            x1[(i, j)] = central(&mut |s| {
                let mut delta = zero1.clone();
                delta[(i, j)] += s;
                (
                    eval_loss(inst, &inst.params, &inst.input, &inst.mask, &delta),
                    relu_pattern(&inst.params, &inst.input, &inst.mask, &delta),
                )
            });
        }
    }

    let mut mask = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            mask[(i, j)] = central(&mut |s| {
                let mut m = inst.mask.clone();
                m[(i, j)] += s;
                (
                    eval_loss(inst, &inst.params, &inst.input, &m, &zero1),
                    relu_pattern(&inst.params, &inst.input, &m, &zero1),
                )
            });
        }
    }

    (!kink).then_some(FdGrads { params: params_fd, x0, x1, mask })
}

/// Random instance whose finite-difference probes avoid every ReLU kink,
/// redrawn (jittered) until they do. Returns the instance, its oracle
/// gradients and the number of redraws.
pub fn kink_free_instance(task: Task, rng: &mut Rng) -> (Instance, FdGrads, usize) {
    let mut retries = 0;
    loop {
        let inst = random_instance(task, rng);
        if let Some(fd) = finite_differences(&inst) {
            return (inst, fd, retries);
        }
        retries += 1;
        assert!(retries < 200, "could not find a kink-free instance");
    }
}

/// Spearman with average ranks computed the slow way: rank by counting.
pub fn brute_force_spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(x: &[f64]) -> Vec<f64> {
        x.iter()
            .map(|&v| {
                let less = x.iter().filter(|&&w| w < v).count() as f64;
                let equal = x.iter().filter(|&&w| w == v).count() as f64;
                less + (equal + 1.0) / 2.0
            })
            .collect()
    }
    let a: Vec<f64> = a.iter().map(|v| v.abs()).collect();
    let b: Vec<f64> = b.iter().map(|v| v.abs()).collect();
    let (ra, rb) = (ranks(&a), ranks(&b));
    let n = ra.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut da = 0.0;
    let mut db = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        num += (x - ma) * (y - mb);
        da += (x - ma) * (x - ma);
        db += (y - mb) * (y - mb);
    }
    if da == 0.0 || db == 0.0 {
        0.0
    } else {
        num / (da * db).sqrt()
    }
}
