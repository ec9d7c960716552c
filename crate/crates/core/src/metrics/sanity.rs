use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explain::{explain_prepared, ExplainTarget, ExplainerConfig, Method};
use crate::gcn::{GcnInput, ModelParams};
use crate::graph::{Dataset, Graph, SplitKind, Task};
use crate::numeric::Rng;

use super::correlation::{pearson, spearman, Correlation};
use super::stats::{mean, std_dev};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSample {
    pub trial: usize,
    pub instance: usize,
    pub spearman: f64,
    pub pearson: f64,
    /// Either attribution was constant.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SanityCheckResult {
    pub method: Method,
    pub trials: usize,
    pub instances: Vec<usize>,
    /// `trials × instances` samples, trial-major.
    pub samples: Vec<CorrelationSample>,
    pub mean_spearman: f64,
    pub std_spearman: f64,
    pub mean_pearson: f64,
    pub degenerate_count: usize,
}

/// Positions compared for one instance: every node/edge of a graph, or for
/// node-level models the target's 2-hop neighbourhood (nodes) and the edges
/// inside it. Scores outside that region are zero or untouched by
/// construction and would only add ties.
fn support(task: Task, method: Method, g: &Graph, instance: usize) -> Option<Vec<usize>> {
    if task == Task::GraphClassification {
        return None;
    }
    let region = g.k_hop_nodes(instance, 2);
    match method {
        Method::GnnExplainer => {
            let mut inside = vec![false; g.num_nodes()];
            for &v in &region {
                inside[v] = true;
            }
            Some(
                g.edges()
                    .iter()
                    .enumerate()
                    .filter(|(_, &(a, b))| inside[a] && inside[b])
                    .map(|(e, _)| e)
                    .collect(),
            )
        }
        _ => Some(region),
    }
}

/// Model-randomization sanity check on the test split, with randomized
/// models drawn by [`ModelParams::randomize`] from child stream `t` of `rng`
/// for trial `t`.
pub fn sanity_check(
    trained: &ModelParams,
    dataset: &Dataset,
    method: Method,
    cfg: &ExplainerConfig,
    trials: usize,
    rng: &Rng,
) -> Result<SanityCheckResult> {
    let test = dataset.split_indices(SplitKind::Test)?;
    sanity_check_on(trained, dataset, test, method, cfg, trials, rng, |p, r| p.randomize(r))
}

/// [`sanity_check`] with a caller-supplied randomizer.
pub fn sanity_check_with<F>(
    trained: &ModelParams,
    dataset: &Dataset,
    method: Method,
    cfg: &ExplainerConfig,
    trials: usize,
    rng: &Rng,
    randomizer: F,
) -> Result<SanityCheckResult>
where
    F: FnMut(&ModelParams, &mut Rng) -> Result<ModelParams>,
{
    let test = dataset.split_indices(SplitKind::Test)?;
    sanity_check_on(trained, dataset, test, method, cfg, trials, rng, randomizer)
}

/// Sanity check over explicit instances (graph indices, or node indices for
/// node-level datasets). Both models explain the class the trained model
/// predicts.
#[allow(clippy::too_many_arguments)]
pub fn sanity_check_on<F>(
    trained: &ModelParams,
    dataset: &Dataset,
    instances: &[usize],
    method: Method,
    cfg: &ExplainerConfig,
    trials: usize,
    rng: &Rng,
    mut randomizer: F,
) -> Result<SanityCheckResult>
where
    F: FnMut(&ModelParams, &mut Rng) -> Result<ModelParams>,
{
    if instances.is_empty() {
        return Err(Error::Empty("test set"));
    }
    if trials == 0 {
        return Err(Error::config("trials", "must be >= 1"));
    }
    let task = dataset.task;
    let graph_of = |i: usize| match task {
        Task::GraphClassification => i,
        Task::NodeClassification => 0,
    };
    let target_of = |i: usize| match task {
        Task::GraphClassification => ExplainTarget::graph(),
        Task::NodeClassification => ExplainTarget::node(i),
    };
    let inputs: Vec<GcnInput> = match task {
        Task::GraphClassification => instances.iter().map(|&i| GcnInput::from_graph(&dataset.graphs[i])).collect(),
        Task::NodeClassification => vec![GcnInput::from_graph(&dataset.graphs[0])],
    };
    let input_of = |k: usize| match task {
        Task::GraphClassification => &inputs[k],
        Task::NodeClassification => &inputs[0],
    };

    let mut reference = Vec::with_capacity(instances.len());
    for (k, &i) in instances.iter().enumerate() {
        let g = &dataset.graphs[graph_of(i)];
        let a = explain_prepared(method, trained, g, input_of(k), target_of(i), cfg)?;
        let target = target_of(i).with_class(a.class);
        let keep = support(task, method, g, i);
        reference.push((a.scores, target, keep));
    }

    let pick = |scores: &[f64], keep: &Option<Vec<usize>>| -> Vec<f64> {
        match keep {
            Some(idx) => idx.iter().map(|&k| scores[k]).collect(),
            None => scores.to_vec(),
        }
    };

    let mut samples = Vec::with_capacity(trials * instances.len());
    for t in 0..trials {
        let randomized = randomizer(trained, &mut rng.child(t as u64))?;
        for (k, (&i, (ref_scores, target, keep))) in instances.iter().zip(&reference).enumerate() {
            let g = &dataset.graphs[graph_of(i)];
            let a = explain_prepared(method, &randomized, g, input_of(k), *target, cfg)?;
            let x = pick(ref_scores, keep);
            let y = pick(&a.scores, keep);
            let (s, p) = if x.len() < 2 {
                (Correlation { value: 0.0, degenerate: true }, Correlation { value: 0.0, degenerate: true })
            } else {
                (spearman(&x, &y)?, pearson(&x, &y)?)
            };
            samples.push(CorrelationSample {
                trial: t,
                instance: i,
                spearman: s.value,
                pearson: p.value,
                degenerate: x.len() < 2 || s.degenerate,
            });
        }
    }
    let sp: Vec<f64> = samples.iter().map(|s| s.spearman).collect();
    let pe: Vec<f64> = samples.iter().map(|s| s.pearson).collect();
    Ok(SanityCheckResult {
        method,
        trials,
        instances: instances.to_vec(),
        mean_spearman: mean(&sp),
        std_spearman: std_dev(&sp),
        mean_pearson: mean(&pe),
        degenerate_count: samples.iter().filter(|s| s.degenerate).count(),
        samples,
    })
}
