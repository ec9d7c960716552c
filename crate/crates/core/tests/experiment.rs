use advgnn::experiment::{run_experiment, Evaluation, ExperimentConfig};
use advgnn::graph::SplitKind;

const GRAPH_CFG: &str = r#"
name = "single"
master_seed = 4
replicate_count = 2
trials = 3
sweep_trials = 2
dot_samples = 2

[dataset.generator]
kind = "motif_graphs"
count = 60

[train]
epochs = 15
hidden_dim = 8

[grid]
baseline = false
layers = ["x0"]
epsilons = [0.05, 0.2]
methods = ["vg"]
"#;

#[test]
fn single_cell_grid_counts() {
    let cfg = ExperimentConfig::from_toml(GRAPH_CFG).unwrap();
    let test_len = cfg.load_dataset().unwrap().split_indices(SplitKind::Test).unwrap().len();
    let out = run_experiment(&cfg).unwrap();
    let r = &out.report;
    assert_eq!(r.evaluation, Evaluation::SanityCheck);
    assert_eq!(r.cells.len(), 1);
    let cell = r.cell("adv-x0-vg").unwrap();
    assert!(cell.failed.is_none());
    assert_eq!(cell.sweep.len(), 2);
    assert_eq!(cell.sweep.iter().filter(|p| p.selected).count(), 1);
    assert!([0.05, 0.2].contains(&cell.chosen_epsilon.unwrap()));
    assert_eq!(cell.replicates.len(), 2);
    assert_eq!(cell.samples, 2 * 3 * test_len);
    assert_eq!(r.test_evaluations.get("adv-x0-vg"), Some(&1));
    let spearman_rows = out.results.iter().filter(|row| row.metric == "spearman").count();
    assert_eq!(spearman_rows, cell.samples);
    assert_eq!(out.dots.len(), 2);
    assert!(!r.partial);
    assert_eq!(r.config, cfg);
}

#[test]
fn node_task_defaults_to_precision() {
    let text = r#"
replicate_count = 1
max_instances = 6
dot_samples = 0

[dataset.generator]
kind = "ba_shapes"
base_nodes = 40
motif_count = 8

[split]
train = 0.6
val = 0.2
test = 0.2

[train]
epochs = 10
hidden_dim = 8

[grid]
layers = ["penultimate"]
epsilons = [0.1]
methods = ["gnn_explainer", "vg"]

[explainer]
gnnx_iterations = 10
"#;
    let cfg = ExperimentConfig::from_toml(text).unwrap();
    let out = run_experiment(&cfg).unwrap();
    let r = &out.report;
    assert_eq!(r.evaluation, Evaluation::Precision);
    assert_eq!(r.metric, "average_precision");
    assert_eq!(r.cells.len(), 4);
    for c in &r.cells {
        assert!(c.failed.is_none(), "{}: {:?}", c.id, c.failed);
        let m = c.mean.unwrap();
        assert!((0.0..=1.0).contains(&m));
        assert!(c.random_baseline.is_some());
        assert!(c.samples <= 6 && c.samples > 0);
        assert_eq!(r.test_evaluations[&c.id], 1);
    }
    let summary = out.summary_csv().unwrap();
    assert!(summary.lines().next().unwrap().contains("average_precision"));
}

#[test]
fn failing_cells_are_marked_and_the_run_continues() {
    let mut cfg = ExperimentConfig::from_toml(GRAPH_CFG).unwrap();
    cfg.train.learning_rate = 1e300;
    cfg.train.optimizer = advgnn::adversarial::Optimizer::Sgd;
    let out = run_experiment(&cfg).unwrap();
    assert!(out.report.partial);
    for c in &out.report.cells {
        assert!(c.failed.is_some());
    }
    let summary = out.summary_csv().unwrap();
    assert!(summary.lines().nth(1).unwrap().ends_with("failed"), "{summary}");
    let dir = tempfile::tempdir().unwrap();
    out.write(dir.path()).unwrap();
    assert!(dir.path().join("report.json").exists());
}

#[test]
fn runs_are_reproducible_and_seed_sensitive() {
    let cfg = ExperimentConfig::from_toml(GRAPH_CFG).unwrap();
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&cfg).unwrap();
    assert_eq!(a.summary_csv().unwrap(), b.summary_csv().unwrap());
    assert_eq!(a.results_csv().unwrap(), b.results_csv().unwrap());
    let c = run_experiment(&cfg.clone().with_seed(5)).unwrap();
    assert_ne!(a.results_csv().unwrap(), c.results_csv().unwrap());
}

#[test]
fn shipped_configs_parse() {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let motif = ExperimentConfig::load(&root.join("motif.toml")).unwrap();
    let defaults = ExperimentConfig { name: "motif".into(), ..ExperimentConfig::default() };
    assert_eq!(motif, defaults);
    let ba = ExperimentConfig::load(&root.join("ba_shapes.toml")).unwrap();
    assert_eq!(ba.load_dataset().unwrap().task, advgnn::graph::Task::NodeClassification);
}
