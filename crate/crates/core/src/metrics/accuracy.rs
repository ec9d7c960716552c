use crate::error::{Error, Result};
use crate::explain::argmax;
use crate::gcn::{forward, GcnInput, ModelParams};
use crate::graph::{Dataset, SplitKind, Task};

/// Predicted class per logit row (one row for graph models, one per node
/// otherwise). Ties go to the lower class index.
pub fn predict(params: &ModelParams, input: &GcnInput) -> Result<Vec<usize>> {
    let cache = forward(params, input, None, None)?;
    Ok((0..cache.logits.rows()).map(|r| argmax(cache.logits.row(r))).collect())
}

/// Accuracy over instances `idx` with inputs already normalized.
pub fn accuracy_prepared(
    params: &ModelParams,
    inputs: &[GcnInput],
    labels: &[usize],
    task: Task,
    idx: &[usize],
) -> Result<f64> {
    if idx.is_empty() {
        return Err(Error::Empty("evaluation split"));
    }
    let correct = match task {
        Task::GraphClassification => {
            let mut c = 0;
            for &i in idx {
                if predict(params, &inputs[i])?[0] == labels[i] {
                    c += 1;
                }
            }
            c
        }
        Task::NodeClassification => {
            let pred = predict(params, &inputs[0])?;
            idx.iter().filter(|&&v| pred[v] == labels[v]).count()
        }
    };
    Ok(correct as f64 / idx.len() as f64)
}

pub fn accuracy(params: &ModelParams, dataset: &Dataset, split: SplitKind) -> Result<f64> {
    let idx = dataset.split_indices(split)?;
    let inputs: Vec<GcnInput> = dataset.graphs.iter().map(GcnInput::from_graph).collect();
    accuracy_prepared(params, &inputs, &dataset.instance_labels(), dataset.task, idx)
}
