mod common;

use advgnn::adversarial::{train, AdvConfig, TrainConfig};
use advgnn::explain::{
    explain, grad_cam_weights, vanilla_grad, ExplainTarget, ExplainerConfig, Method, NodeReduce,
};
use advgnn::gcn::{forward, GcnInput, Injection, Layer, ModelParams};
use advgnn::graph::{SplitKind, Task};
use advgnn::numeric::{Matrix, Rng};
use advgnn::synth::{gen_motif_graphs, MotifGraphConfig};

use common::{random_instance, rel_err};

const STEP: f64 = 1e-6;

fn relu_signs(params: &ModelParams, input: &GcnInput, inj: Option<&Injection>) -> Vec<bool> {
    let c = forward(params, input, None, inj).unwrap();
    let mut s: Vec<bool> = c.z1.as_slice().iter().map(|&z| z > 0.0).collect();
    if params.task == Task::GraphClassification {
        s.extend(c.z2.as_slice().iter().map(|&z| z > 0.0));
    }
    s
}

fn logit(params: &ModelParams, input: &GcnInput, inj: Option<&Injection>, row: usize, class: usize) -> f64 {
    forward(params, input, None, inj).unwrap().logits[(row, class)]
}

#[test]
fn vanilla_gradient_matches_finite_differences() {
    let mut rng = Rng::new(41);
    let mut checked = 0;
    while checked < 20 {
        for task in [Task::GraphClassification, Task::NodeClassification] {
            let inst = random_instance(task, &mut rng);
            let (row, target) = match task {
                Task::GraphClassification => (0, ExplainTarget::graph()),
                Task::NodeClassification => (inst.nodes[0], ExplainTarget::node(inst.nodes[0])),
            };
            let a = vanilla_grad(&inst.params, &inst.graph, target, NodeReduce::SumAbs).unwrap();
            let fmap = a.feature_scores.as_ref().unwrap();
            let base = relu_signs(&inst.params, &inst.input, None);
            let (n, d) = inst.input.features.shape();
            let mut fd = Matrix::zeros(n, d);
            let mut kink = false;
            for i in 0..n {
                for j in 0..d {
                    let mut plus = inst.input.clone();
                    plus.features[(i, j)] += STEP;
                    let mut minus = inst.input.clone();
                    minus.features[(i, j)] -= STEP;
                    kink |= relu_signs(&inst.params, &plus, None) != base
                        || relu_signs(&inst.params, &minus, None) != base;
                    fd[(i, j)] = (logit(&inst.params, &plus, None, row, a.class)
                        - logit(&inst.params, &minus, None, row, a.class))
                        / (2.0 * STEP);
                }
            }
            if kink {
                continue;
            }
            for (x, y) in fmap.as_slice().iter().zip(fd.as_slice()) {
                assert!(rel_err(*x, y.abs()) <= 1e-4, "{task:?}: {x} vs {}", y.abs());
            }
            for v in 0..n {
                let s: f64 = fd.row(v).iter().map(|g| g.abs()).sum();
                assert!(rel_err(a.scores[v], s) <= 1e-4);
            }
            checked += 1;
        }
    }
}

#[test]
fn grad_cam_weights_match_oracles() {
    let mut rng = Rng::new(42);
    for _ in 0..20 {
        // Graph task: logits = head(mean_v X2[v]), so α_k = W_head[k, c] / n.
        let inst = random_instance(Task::GraphClassification, &mut rng);
        let c = forward(&inst.params, &inst.input, None, None).unwrap();
        let class = advgnn::explain::argmax(c.logits.row(0));
        let w = grad_cam_weights(&inst.params, &inst.graph, ExplainTarget::graph()).unwrap();
        let n = inst.graph.num_nodes() as f64;
        let head = &inst.params.head.as_ref().unwrap().weight;
        for (k, a) in w.iter().enumerate() {
            assert!((a - head[(k, class)] / n).abs() <= 1e-12);
        }

        // Node task: logits are linear in X1, so central differences are exact
        // up to round-off.
        let inst = random_instance(Task::NodeClassification, &mut rng);
        let v = inst.nodes[0];
        let c = forward(&inst.params, &inst.input, None, None).unwrap();
        let class = advgnn::explain::argmax(c.logits.row(v));
        let w = grad_cam_weights(&inst.params, &inst.graph, ExplainTarget::node(v)).unwrap();
        let (nn, h) = (inst.graph.num_nodes(), inst.params.hidden_dim());
        for (k, a) in w.iter().enumerate() {
            let mut total = 0.0;
            for u in 0..nn {
                let mut dp = Matrix::zeros(nn, h);
                dp[(u, k)] = STEP;
                let dm = dp.scale(-1.0);
                let lp = logit(&inst.params, &inst.input, Some(&Injection { layer: Layer::Penultimate, delta: dp }), v, class);
                let lm = logit(&inst.params, &inst.input, Some(&Injection { layer: Layer::Penultimate, delta: dm }), v, class);
                total += (lp - lm) / (2.0 * STEP);
            }
            let fd = total / nn as f64;
            assert!(rel_err(*a, fd) <= 1e-6, "{a} vs {fd}");
        }
    }
}

#[test]
fn attributions_follow_node_permutations() {
    let mut rng = Rng::new(43);
    let cfg = ExplainerConfig { gnnx_iterations: 30, ..ExplainerConfig::default() };
    for _ in 0..10 {
        let inst = random_instance(Task::GraphClassification, &mut rng);
        let n = inst.graph.num_nodes();
        let mut perm: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut perm);
        let pg = inst.graph.permute(&perm).unwrap();
        for method in [Method::VanillaGrad, Method::GradCam] {
            let a = explain(method, &inst.params, &inst.graph, ExplainTarget::graph(), &cfg).unwrap();
            let b = explain(method, &inst.params, &pg, ExplainTarget::graph(), &cfg).unwrap();
            assert_eq!(a.class, b.class);
            for v in 0..n {
                assert!((a.scores[v] - b.scores[perm[v]]).abs() <= 1e-9, "{method}");
            }
        }
        let a = explain(Method::GnnExplainer, &inst.params, &inst.graph, ExplainTarget::graph(), &cfg).unwrap();
        let b = explain(Method::GnnExplainer, &inst.params, &pg, ExplainTarget::graph(), &cfg).unwrap();
        let index = pg.edge_index();
        for (e, &(x, y)) in inst.graph.edges().iter().enumerate() {
            let (p, q) = (perm[x], perm[y]);
            let f = index[&(p.min(q), p.max(q))];
            assert!((a.scores[e] - b.scores[f]).abs() <= 1e-9);
        }
    }
}

#[test]
fn explainers_are_read_only_and_deterministic() {
    let mut rng = Rng::new(44);
    let cfg = ExplainerConfig { gnnx_iterations: 20, ..ExplainerConfig::default() };
    for task in [Task::GraphClassification, Task::NodeClassification] {
        let inst = random_instance(task, &mut rng);
        let before = inst.params.fingerprint();
        let target = match task {
            Task::GraphClassification => ExplainTarget::graph(),
            Task::NodeClassification => ExplainTarget::node(0),
        };
        for method in Method::ALL {
            let a = explain(method, &inst.params, &inst.graph, target, &cfg).unwrap();
            let b = explain(method, &inst.params, &inst.graph, target, &cfg).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.model_fingerprint, before);
            assert!(a.scores.iter().all(|s| s.is_finite()));
        }
        assert_eq!(inst.params.fingerprint(), before);
    }
}

#[test]
fn explained_class_can_be_forced() {
    let mut rng = Rng::new(45);
    let inst = random_instance(Task::GraphClassification, &mut rng);
    let cfg = ExplainerConfig::default();
    let c = inst.params.num_classes();
    for class in 0..c {
        let a = explain(Method::VanillaGrad, &inst.params, &inst.graph, ExplainTarget::graph().with_class(class), &cfg).unwrap();
        assert_eq!(a.class, class);
    }
    let err = explain(Method::GradCam, &inst.params, &inst.graph, ExplainTarget::graph().with_class(c), &cfg);
    assert!(matches!(err, Err(advgnn::Error::ClassOutOfRange { .. })));
}

#[test]
fn gnn_explainer_prefers_motif_edges_on_a_trained_model() {
    let gen = MotifGraphConfig { count: 200, ..MotifGraphConfig::default() };
    let d = gen_motif_graphs(&gen, &Rng::new(3)).unwrap();
    let d = advgnn::graph::split_dataset(&d, (0.8, 0.1, 0.1), &mut Rng::new(4)).unwrap();
    let tcfg = TrainConfig { epochs: 120, hidden_dim: 32, ..TrainConfig::default() };
    let (params, _) = train(&d, &tcfg, &AdvConfig::disabled(), &Rng::new(5)).unwrap();
    let cfg = ExplainerConfig::default();
    let (mut motif, mut other) = (Vec::new(), Vec::new());
    for &i in d.split_indices(SplitKind::Test).unwrap() {
        let g = &d.graphs[i];
        let Some(gt) = g.ground_truth_edges() else { continue };
        if gt.is_empty() {
            continue;
        }
        let a = explain(Method::GnnExplainer, &params, g, ExplainTarget::graph(), &cfg).unwrap();
        for (e, edge) in g.edges().iter().enumerate() {
            if gt.contains(edge) {
                motif.push(a.scores[e]);
            } else {
                other.push(a.scores[e]);
            }
        }
    }
    assert!(!motif.is_empty());
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    eprintln!("motif {:.4} other {:.4}", mean(&motif), mean(&other));
    assert!(mean(&motif) > mean(&other));
}
