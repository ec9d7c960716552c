use std::collections::BTreeMap;
use std::time::Instant;

use log::{info, warn};

use crate::adversarial::{train, AdvConfig, TrainLog};
use crate::error::{Error, Result};
use crate::explain::{explain_prepared, to_dot, AttributionKind, ExplainTarget, Method};
use crate::gcn::{GcnInput, Layer, ModelParams};
use crate::graph::{Dataset, SplitKind, Task};
use crate::metrics::{
    accuracy_prepared, mean, paired_t_test, precision_at_gt, sanity_check_on, std_dev, PrecisionSample,
};
use crate::numeric::Rng;
use crate::util::fingerprint;

use super::config::{Evaluation, ExperimentConfig};
use super::report::{
    CellReport, Comparison, ExperimentOutput, ExperimentReport, ReplicateReport, ResultRow, SweepPoint,
    REPORT_FORMAT, REPORT_VERSION,
};

/// Stream layout under the master seed. 0 and 1 belong to dataset
/// generation and splitting.
const STREAM_INIT: u64 = 2;
const STREAM_TEST_TRIALS: u64 = 3;
const STREAM_SWEEP_TRIALS: u64 = 4;
const STREAM_INSTANCES: u64 = 5;

/// Baseline or adversarial training at one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) enum Setting {
    Baseline,
    Adversarial(Layer),
}

impl Setting {
    pub(crate) fn id(self) -> String {
        match self {
            Setting::Baseline => "baseline".into(),
            Setting::Adversarial(l) => format!("adv-{}", l.label().to_ascii_lowercase()),
        }
    }

    fn layer(self) -> Option<Layer> {
        match self {
            Setting::Baseline => None,
            Setting::Adversarial(l) => Some(l),
        }
    }
}

struct Trained {
    params: ModelParams,
    log: TrainLog,
    val_accuracy: f64,
    test_accuracy: f64,
}

type ModelKey = (Setting, u64, usize);

struct Runner<'a> {
    cfg: &'a ExperimentConfig,
    dataset: &'a Dataset,
    inputs: Vec<GcnInput>,
    labels: Vec<usize>,
    master: Rng,
    evaluation: Evaluation,
    models: BTreeMap<ModelKey, std::result::Result<Trained, String>>,
    test_evaluations: BTreeMap<String, usize>,
}

impl Runner<'_> {
    fn adv_config(&self, setting: Setting, epsilon: f64) -> AdvConfig {
        match setting {
            Setting::Baseline => AdvConfig::disabled(),
            Setting::Adversarial(layer) => self.cfg.grid.adv_config(layer, epsilon),
        }
    }

    /// Trains (or recalls) replicate `r` of `setting` at `epsilon`. Replicate
    /// `r` always starts from the same initialization stream, so settings
    /// are paired by replicate.
    fn model(&mut self, setting: Setting, epsilon: f64, r: usize) -> std::result::Result<&Trained, String> {
        let key = (setting, epsilon.to_bits(), r);
        if !self.models.contains_key(&key) {
            let acfg = self.adv_config(setting, epsilon);
            let rng = self.master.child(STREAM_INIT).child(r as u64);
            let start = Instant::now();
            let outcome = train(self.dataset, &self.cfg.train, &acfg, &rng).and_then(|(params, log)| {
                let val = self.dataset.split_indices(SplitKind::Val)?;
                let test = self.dataset.split_indices(SplitKind::Test)?;
                let task = self.dataset.task;
                Ok(Trained {
                    val_accuracy: accuracy_prepared(&params, &self.inputs, &self.labels, task, val)?,
                    test_accuracy: accuracy_prepared(&params, &self.inputs, &self.labels, task, test)?,
                    params,
                    log,
                })
            });
            match &outcome {
                Ok(t) => info!(
                    "trained {} eps={} replicate {}: val acc {:.3} ({:.1?})",
                    setting.id(),
                    epsilon,
                    r,
                    t.val_accuracy,
                    start.elapsed()
                ),
                Err(e) => warn!("training {} eps={} replicate {} failed: {e}", setting.id(), epsilon, r),
            }
            self.models.insert(key, outcome.map_err(|e| e.to_string()));
        }
        self.models[&key].as_ref().map_err(Clone::clone)
    }

    fn target(&self, instance: usize) -> ExplainTarget {
        match self.dataset.task {
            Task::GraphClassification => ExplainTarget::graph(),
            Task::NodeClassification => ExplainTarget::node(instance),
        }
    }

    fn graph_index(&self, instance: usize) -> usize {
        match self.dataset.task {
            Task::GraphClassification => instance,
            Task::NodeClassification => 0,
        }
    }

    /// Instances of `split` to explain: all of them for the sanity check,
    /// those with planted ground truth for precision; capped by
    /// `max_instances` via a seeded subsample.
    fn instances(&self, split: SplitKind, method: Method) -> Result<Vec<usize>> {
        let idx = self.dataset.split_indices(split)?;
        let mut out: Vec<usize> = match self.evaluation {
            Evaluation::SanityCheck => idx.to_vec(),
            Evaluation::Precision => idx
                .iter()
                .copied()
                .filter(|&i| has_ground_truth(self.dataset, i, method.kind()))
                .collect(),
        };
        if let Some(cap) = self.cfg.max_instances {
            if out.len() > cap {
                let mut rng = self.master.child(STREAM_INSTANCES).child(split as u64);
                rng.shuffle(&mut out);
                out.truncate(cap);
                out.sort_unstable();
            }
        }
        if out.is_empty() {
            return Err(match self.evaluation {
                Evaluation::SanityCheck => Error::Empty("evaluation split"),
                Evaluation::Precision => Error::MissingGroundTruth(match method.kind() {
                    AttributionKind::Edge => "edges",
                    _ => "nodes",
                }),
            });
        }
        Ok(out)
    }

    fn precision_samples(&self, params: &ModelParams, method: Method, instances: &[usize]) -> Result<Vec<PrecisionSample>> {
        instances
            .iter()
            .map(|&i| {
                let gi = self.graph_index(i);
                let g = &self.dataset.graphs[gi];
                let a = explain_prepared(method, params, g, &self.inputs[gi], self.target(i), &self.cfg.explainer)?;
                let mut s = precision_at_gt(&a, g)?;
                s.instance = i;
                Ok(s)
            })
            .collect()
    }

    /// Validation score of one model for ε selection.
    fn validation_metric(&self, params: &ModelParams, method: Method, val: &[usize]) -> Result<f64> {
        match self.evaluation {
            Evaluation::SanityCheck => {
                let rng = self.master.child(STREAM_SWEEP_TRIALS);
                let res = sanity_check_on(
                    params,
                    self.dataset,
                    val,
                    method,
                    &self.cfg.explainer,
                    self.cfg.sweep_trials,
                    &rng,
                    |p, r| p.randomize(r),
                )?;
                Ok(res.mean_spearman)
            }
            Evaluation::Precision => {
                let s = self.precision_samples(params, method, val)?;
                Ok(mean(&s.iter().map(|s| s.precision).collect::<Vec<_>>()))
            }
        }
    }

    fn sweep(&mut self, setting: Setting, method: Method, baseline_val: Option<f64>) -> Result<(Vec<SweepPoint>, Option<f64>)> {
        let candidates = match setting {
            Setting::Baseline => vec![0.0],
            Setting::Adversarial(_) => self.cfg.grid.epsilons.clone(),
        };
        let val = self.instances(SplitKind::Val, method)?;
        let mut points = Vec::new();
        for &eps in &candidates {
            let point = match self.model(setting, eps, 0) {
                Ok(t) => {
                    let (acc, params) = (t.val_accuracy, t.params.clone());
                    match self.validation_metric(&params, method, &val) {
                        Ok(m) => SweepPoint { epsilon: eps, val_accuracy: Some(acc), val_metric: Some(m), selected: false, error: None },
                        Err(e) => SweepPoint { epsilon: eps, val_accuracy: Some(acc), val_metric: None, selected: false, error: Some(e.to_string()) },
                    }
                }
                Err(e) => SweepPoint { epsilon: eps, val_accuracy: None, val_metric: None, selected: false, error: Some(e) },
            };
            points.push(point);
        }
        let chosen = select_epsilon(&points, self.evaluation, baseline_val, self.cfg.max_accuracy_drop);
        if let Some(k) = chosen {
            points[k].selected = true;
        }
        Ok((points.clone(), chosen.map(|k| points[k].epsilon)))
    }

    fn evaluate_cell(&mut self, setting: Setting, method: Method, epsilon: f64, cell: &mut CellReport, rows: &mut Vec<ResultRow>) -> Result<()> {
        *self.test_evaluations.entry(cell.id.clone()).or_insert(0) += 1;
        let test = self.instances(SplitKind::Test, method)?;
        let mut per_replicate = Vec::new();
        for r in 0..self.cfg.replicate_count {
            let (params, log_best, val_acc, test_acc) = match self.model(setting, epsilon, r) {
                Ok(t) => (t.params.clone(), t.log.best_epoch, t.val_accuracy, t.test_accuracy),
                Err(e) => return Err(Error::CellFailed(format!("replicate {r}: {e}"))),
            };
            let model_id = format!("{}/r{r}", cell.id);
            let mut rep = ReplicateReport {
                replicate: r,
                epsilon,
                best_epoch: log_best,
                val_accuracy: val_acc,
                test_accuracy: test_acc,
                metric: f64::NAN,
                pearson: None,
                degenerate: 0,
                samples: 0,
            };
            match self.evaluation {
                Evaluation::SanityCheck => {
                    let rng = self.master.child(STREAM_TEST_TRIALS).child(r as u64);
                    let res = sanity_check_on(
                        &params,
                        self.dataset,
                        &test,
                        method,
                        &self.cfg.explainer,
                        self.cfg.trials,
                        &rng,
                        |p, r| p.randomize(r),
                    )?;
                    for s in &res.samples {
                        rows.push(ResultRow::new(&model_id, Some(s.trial), s.instance, "spearman", s.spearman));
                        rows.push(ResultRow::new(&model_id, Some(s.trial), s.instance, "pearson", s.pearson));
                    }
                    rep.metric = res.mean_spearman;
                    rep.pearson = Some(res.mean_pearson);
                    rep.degenerate = res.degenerate_count;
                    rep.samples = res.samples.len();
                }
                Evaluation::Precision => {
                    let samples = self.precision_samples(&params, method, &test)?;
                    for s in &samples {
                        rows.push(ResultRow::new(&model_id, None, s.instance, "precision", s.precision));
                    }
                    rep.metric = mean(&samples.iter().map(|s| s.precision).collect::<Vec<_>>());
                    rep.samples = samples.len();
                    if cell.random_baseline.is_none() {
                        cell.random_baseline = Some(random_precision(self.dataset, method.kind(), &samples));
                    }
                }
            }
            per_replicate.push(rep);
        }
        let metrics: Vec<f64> = per_replicate.iter().map(|r| r.metric).collect();
        cell.mean = Some(mean(&metrics));
        cell.std = Some(std_dev(&metrics));
        cell.mean_pearson = per_replicate
            .iter()
            .map(|r| r.pearson)
            .collect::<Option<Vec<_>>>()
            .map(|v| mean(&v));
        cell.mean_test_accuracy = Some(mean(&per_replicate.iter().map(|r| r.test_accuracy).collect::<Vec<_>>()));
        cell.samples = per_replicate.iter().map(|r| r.samples).sum();
        cell.replicates = per_replicate;
        Ok(())
    }

    fn dot_samples(&self, setting: Setting, method: Method, epsilon: f64, cell_id: &str) -> Vec<(String, String)> {
        if self.cfg.dot_samples == 0 {
            return Vec::new();
        }
        let key = (setting, epsilon.to_bits(), 0);
        let Some(Ok(t)) = self.models.get(&key) else { return Vec::new() };
        let Ok(test) = self.instances(SplitKind::Test, method) else { return Vec::new() };
        let mut out = Vec::new();
        for &i in test.iter().take(self.cfg.dot_samples) {
            let gi = self.graph_index(i);
            let g = &self.dataset.graphs[gi];
            if let Ok(a) = explain_prepared(method, &t.params, g, &self.inputs[gi], self.target(i), &self.cfg.explainer) {
                let name = format!("{cell_id}-instance{i}");
                out.push((format!("{name}.dot"), to_dot(&name, g, &a)));
            }
        }
        out
    }
}

fn has_ground_truth(d: &Dataset, instance: usize, kind: AttributionKind) -> bool {
    match d.task {
        Task::GraphClassification => {
            let g = &d.graphs[instance];
            match kind {
                AttributionKind::Edge => g.ground_truth_edges().is_some_and(|e| !e.is_empty()),
                _ => g.ground_truth_nodes().is_some_and(|n| !n.is_empty()),
            }
        }
        Task::NodeClassification => d.graphs[0].node_ground_truth_edges(instance).is_some_and(|e| !e.is_empty()),
    }
}

/// Expected precision of uniformly random scores: `k / |items|` averaged
/// over the explained instances.
fn random_precision(d: &Dataset, kind: AttributionKind, samples: &[PrecisionSample]) -> f64 {
    let vals: Vec<f64> = samples
        .iter()
        .map(|s| {
            let g = match d.task {
                Task::GraphClassification => &d.graphs[s.instance],
                Task::NodeClassification => &d.graphs[0],
            };
            let items = match kind {
                AttributionKind::Edge => g.edges().len(),
                _ => g.num_nodes(),
            };
            s.k as f64 / items as f64
        })
        .collect();
    mean(&vals)
}

/// Index of the chosen sweep point.
///
/// Sanity check: lowest validation correlation among points whose accuracy
/// is within `max_drop` of the baseline, falling back to the most accurate
/// point when none qualifies. Precision: highest validation precision.
/// Ties go to the earlier point.
pub(crate) fn select_epsilon(points: &[SweepPoint], eval: Evaluation, baseline_val: Option<f64>, max_drop: f64) -> Option<usize> {
    let usable: Vec<(usize, f64, f64)> = points
        .iter()
        .enumerate()
        .filter_map(|(k, p)| Some((k, p.val_accuracy?, p.val_metric?)))
        .collect();
    let best_by = |items: &[(usize, f64, f64)], key: &dyn Fn(&(usize, f64, f64)) -> f64| -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for it in items {
            let v = key(it);
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((it.0, v));
            }
        }
        best.map(|(k, _)| k)
    };
    match eval {
        Evaluation::Precision => best_by(&usable, &|p| p.2),
        Evaluation::SanityCheck => {
            let floor = baseline_val.map(|b| b - max_drop - 1e-12).unwrap_or(f64::NEG_INFINITY);
            let eligible: Vec<_> = usable.iter().copied().filter(|p| p.1 >= floor).collect();
            if eligible.is_empty() {
                best_by(&usable, &|p| p.1)
            } else {
                best_by(&eligible, &|p| -p.2)
            }
        }
    }
}

/// Runs the whole protocol in memory: for every grid cell, sweep ε on the
/// validation split, train the replicates at the chosen ε, and score them
/// once on the test split.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let mut cfg = cfg.clone();
    cfg.sync_train();
    let dataset = cfg.load_dataset()?;
    let evaluation = cfg.evaluation.unwrap_or(Evaluation::for_task(dataset.task));
    let mut runner = Runner {
        cfg: &cfg,
        dataset: &dataset,
        inputs: dataset.graphs.iter().map(GcnInput::from_graph).collect(),
        labels: dataset.instance_labels(),
        master: Rng::new(cfg.master_seed),
        evaluation,
        models: BTreeMap::new(),
        test_evaluations: BTreeMap::new(),
    };

    let mut settings = Vec::new();
    if cfg.grid.baseline {
        settings.push(Setting::Baseline);
    }
    settings.extend(cfg.grid.layers.iter().map(|&l| Setting::Adversarial(l)));

    // Reference accuracy for the correlation criterion.
    let baseline_val = if evaluation == Evaluation::SanityCheck && !cfg.grid.layers.is_empty() {
        runner.model(Setting::Baseline, 0.0, 0).ok().map(|t| t.val_accuracy)
    } else {
        None
    };

    let mut cells = Vec::new();
    let mut rows = Vec::new();
    let mut dots = Vec::new();
    for &setting in &settings {
        for &method in &cfg.grid.methods {
            let id = format!("{}-{}", setting.id(), method.id());
            let start = Instant::now();
            let mut cell = CellReport::new(id.clone(), setting.layer(), method, evaluation);
            let outcome = runner.sweep(setting, method, baseline_val).and_then(|(sweep, chosen)| {
                cell.sweep = sweep;
                let eps = chosen.ok_or_else(|| Error::CellFailed("no usable ε in the sweep".into()))?;
                cell.chosen_epsilon = (setting != Setting::Baseline).then_some(eps);
                let mut cell_rows = Vec::new();
                runner.evaluate_cell(setting, method, eps, &mut cell, &mut cell_rows)?;
                rows.extend(cell_rows);
                dots.extend(runner.dot_samples(setting, method, eps, &id));
                Ok(())
            });
            if let Err(e) = outcome {
                warn!("cell {id} failed: {e}");
                cell.failed = Some(e.to_string());
            }
            info!("cell {id} done in {:.1?}", start.elapsed());
            cells.push(cell);
        }
    }

    let comparisons = compare_with_baseline(&cells);
    let partial = cells.iter().any(|c| c.failed.is_some());
    let report = ExperimentReport {
        format: REPORT_FORMAT.into(),
        version: REPORT_VERSION,
        name: cfg.name.clone(),
        evaluation,
        metric: evaluation.metric_name().into(),
        task: dataset.task,
        dataset_fingerprint: fingerprint(dataset.to_json()?.as_bytes()),
        rng_algorithm: runner.master.algorithm().into(),
        split_sizes: [SplitKind::Train, SplitKind::Val, SplitKind::Test]
            .map(|k| dataset.split_indices(k).map(|s| s.len()).unwrap_or(0)),
        dataset_warnings: dataset.warnings.clone(),
        partial,
        test_evaluations: runner.test_evaluations.clone(),
        cells,
        comparisons,
        config: cfg.clone(),
    };
    Ok(ExperimentOutput { report, results: rows, dots })
}

/// One-sided paired tests of `baseline > adversarial` per method and layer,
/// pairing replicates by index.
fn compare_with_baseline(cells: &[CellReport]) -> Vec<Comparison> {
    let mut out = Vec::new();
    for base in cells.iter().filter(|c| !c.adversarial && c.failed.is_none()) {
        for adv in cells.iter().filter(|c| c.adversarial && c.method == base.method && c.failed.is_none()) {
            let a: Vec<f64> = base.replicates.iter().map(|r| r.metric).collect();
            let b: Vec<f64> = adv.replicates.iter().map(|r| r.metric).collect();
            out.push(Comparison {
                method: base.method,
                layer: adv.layer,
                baseline_mean: mean(&a),
                adversarial_mean: mean(&b),
                baseline_greater: paired_t_test(&a, &b),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(eps: f64, acc: f64, m: f64) -> SweepPoint {
        SweepPoint { epsilon: eps, val_accuracy: Some(acc), val_metric: Some(m), selected: false, error: None }
    }

    #[test]
    fn correlation_selection_respects_accuracy_floor() {
        let pts = [pt(0.1, 0.99, 0.4), pt(0.2, 0.95, 0.1), pt(0.5, 0.98, 0.3)];
        assert_eq!(select_epsilon(&pts, Evaluation::SanityCheck, Some(1.0), 0.02), Some(2));
        assert_eq!(select_epsilon(&pts, Evaluation::SanityCheck, None, 0.02), Some(1));
        let low = [pt(0.1, 0.5, 0.4), pt(0.2, 0.6, 0.1)];
        assert_eq!(select_epsilon(&low, Evaluation::SanityCheck, Some(1.0), 0.02), Some(1));
    }

    #[test]
    fn precision_selection_and_ties() {
        let pts = [pt(0.1, 0.9, 0.5), pt(0.2, 0.9, 0.7), pt(0.3, 0.9, 0.7)];
        assert_eq!(select_epsilon(&pts, Evaluation::Precision, None, 0.02), Some(1));
        let failed = SweepPoint { val_metric: None, ..pt(0.4, 0.9, 0.0) };
        assert_eq!(select_epsilon(&[failed], Evaluation::Precision, None, 0.02), None);
    }
}
