use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gcn::{
    backward_from_logits, forward, loss_and_logit_grad, GcnInput, Injection, ModelParams, Target,
    Wants,
};
use crate::graph::{Dataset, SplitKind, Task};
use crate::metrics::accuracy_prepared;
use crate::numeric::Rng;

use super::attack::attack;
use super::config::{AdvConfig, Optimizer, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub clean_loss: f64,
    /// Mean adversarial loss over perturbed examples (0 when disabled).
    pub adv_loss: f64,
    pub total_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were returned.
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
}

impl TrainLog {
    /// CSV with columns `epoch,clean_loss,adv_loss,val_accuracy`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["epoch", "clean_loss", "adv_loss", "val_accuracy"])?;
        for e in &self.epochs {
            w.write_record([
                e.epoch.to_string(),
                e.clean_loss.to_string(),
                e.adv_loss.to_string(),
                e.val_accuracy.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// First/second moment state for Adam, or nothing for SGD.
struct OptimizerState {
    kind: Optimizer,
    lr: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl OptimizerState {
    fn new(kind: Optimizer, lr: f64, params: &ModelParams) -> Self {
        let zeros: Vec<Vec<f64>> = params.buffers().iter().map(|b| vec![0.0; b.len()]).collect();
        Self { kind, lr, step: 0, m: zeros.clone(), v: zeros }
    }

    fn apply(&mut self, params: &mut ModelParams, grad: &ModelParams) {
        self.step += 1;
        let grads = grad.buffers();
        match self.kind {
            Optimizer::Sgd => {
                for (p, g) in params.buffers_mut().into_iter().zip(grads) {
                    for (x, dx) in p.iter_mut().zip(g) {
                        *x -= self.lr * dx;
                    }
                }
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                let c1 = 1.0 - beta1.powi(self.step);
                let c2 = 1.0 - beta2.powi(self.step);
                for (bi, (p, g)) in params.buffers_mut().into_iter().zip(grads).enumerate() {
                    let (m, v) = (&mut self.m[bi], &mut self.v[bi]);
                    for k in 0..p.len() {
                        m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
                        v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
                        let mh = m[k] / c1;
                        let vh = v[k] / c2;
                        p[k] -= self.lr * mh / (vh.sqrt() + eps);
                    }
                }
            }
        }
    }
}

/// Loss terms and parameter gradient for one optimization step.
struct StepResult {
    clean: f64,
    adv: f64,
    grad: ModelParams,
}

fn graph_task_step(
    params: &ModelParams,
    inputs: &[GcnInput],
    labels: &[usize],
    train: &[usize],
    acfg: &AdvConfig,
    rng: &mut Rng,
) -> Result<StepResult> {
    let mut grad = params.zeros_like();
    let inv = 1.0 / train.len() as f64;
    let mut clean_sum = 0.0;
    let mut adv_sum = 0.0;
    let mut adv_grad = params.zeros_like();
    let mut perturbed = 0usize;
    for &gi in train {
        let input = &inputs[gi];
        let target = Target::Graph(labels[gi]);
        let cache = forward(params, input, None, None)?;
        let (l, dl) = loss_and_logit_grad(&cache, &target)?;
        clean_sum += l;
        let g = backward_from_logits(&cache, &dl, Wants::params())?;
        grad.add_scaled(g.params.as_ref().expect("param grads"), inv)?;

        if acfg.enabled && (acfg.perturb_fraction >= 1.0 || rng.bernoulli(acfg.perturb_fraction)) {
            let phi = attack(params, input, &target, acfg)?;
            let inj = Injection { layer: acfg.layer, delta: phi };
            let cache = forward(params, input, None, Some(&inj))?;
            let (la, dla) = loss_and_logit_grad(&cache, &target)?;
            let ga = backward_from_logits(&cache, &dla, Wants::params())?;
            adv_grad.add_scaled(ga.params.as_ref().expect("param grads"), 1.0)?;
            adv_sum += la;
            perturbed += 1;
        }
    }
    let clean = clean_sum * inv;
    let mut adv = 0.0;
    if perturbed > 0 {
        let inv_adv = 1.0 / perturbed as f64;
        adv = adv_sum * inv_adv;
        grad.add_scaled(&adv_grad, acfg.lambda * inv_adv)?;
    }
    Ok(StepResult { clean, adv, grad })
}

fn node_task_step(
    params: &ModelParams,
    input: &GcnInput,
    labels: &[usize],
    train: &[usize],
    acfg: &AdvConfig,
    rng: &mut Rng,
) -> Result<StepResult> {
    let target = Target::Nodes { labels, nodes: train };
    let cache = forward(params, input, None, None)?;
    let (clean, dl) = loss_and_logit_grad(&cache, &target)?;
    let mut grad = backward_from_logits(&cache, &dl, Wants::params())?
        .params
        .expect("param grads");
    let mut adv = 0.0;
    if acfg.enabled {
        let subset: Vec<usize> = if acfg.perturb_fraction >= 1.0 {
            train.to_vec()
        } else {
            train
                .iter()
                .copied()
                .filter(|_| rng.bernoulli(acfg.perturb_fraction))
                .collect()
        };
        if !subset.is_empty() {
            let adv_target = Target::Nodes { labels, nodes: &subset };
            let phi = attack(params, input, &adv_target, acfg)?;
            let inj = Injection { layer: acfg.layer, delta: phi };
            let cache = forward(params, input, None, Some(&inj))?;
            let (la, dla) = loss_and_logit_grad(&cache, &adv_target)?;
            adv = la;
            let ga = backward_from_logits(&cache, &dla, Wants::params())?;
            grad.add_scaled(ga.params.as_ref().expect("param grads"), acfg.lambda)?;
        }
    }
    Ok(StepResult { clean, adv, grad })
}

/// Mean validation loss over `split`.
fn split_loss(params: &ModelParams, inputs: &[GcnInput], labels: &[usize], task: Task, split: &[usize]) -> Result<f64> {
    if split.is_empty() {
        return Ok(f64::NAN);
    }
    match task {
        Task::GraphClassification => {
            let mut total = 0.0;
            for &gi in split {
                let cache = forward(params, &inputs[gi], None, None)?;
                total += loss_and_logit_grad(&cache, &Target::Graph(labels[gi]))?.0;
            }
            Ok(total / split.len() as f64)
        }
        Task::NodeClassification => {
            let cache = forward(params, &inputs[0], None, None)?;
            Ok(loss_and_logit_grad(&cache, &Target::Nodes { labels, nodes: split })?.0)
        }
    }
}

/// Trains one model on the dataset's train split.
///
/// Each step minimizes `clean + λ · adv`, where the adversarial perturbation
/// is recomputed against the current weights for every perturbed example.
/// Returns the parameters from the epoch with the highest validation
/// accuracy (ties go to the lower validation loss, then the earlier epoch).
pub fn train(
    dataset: &Dataset,
    tcfg: &TrainConfig,
    acfg: &AdvConfig,
    rng: &Rng,
) -> Result<(ModelParams, TrainLog)> {
    tcfg.validate()?;
    acfg.validate()?;
    let train_idx = dataset.split_indices(SplitKind::Train)?.to_vec();
    let val_idx = dataset.split_indices(SplitKind::Val)?.to_vec();
    if train_idx.is_empty() {
        return Err(Error::Empty("training split"));
    }
    let inputs: Vec<GcnInput> = dataset.graphs.iter().map(GcnInput::from_graph).collect();
    let labels = dataset.instance_labels();

    let mut params = ModelParams::init(
        dataset.task,
        dataset.num_features(),
        tcfg.hidden_dim,
        dataset.num_classes,
        &mut rng.child(0),
    )?;
    let mut sample_rng = rng.child(1);
    let mut opt = OptimizerState::new(tcfg.optimizer, tcfg.learning_rate, &params);

    let mut log = TrainLog::default();
    let mut best: Option<(f64, f64, ModelParams)> = None;

    for epoch in 1..=tcfg.epochs {
        let step = match dataset.task {
            Task::GraphClassification => {
                graph_task_step(&params, &inputs, &labels, &train_idx, acfg, &mut sample_rng)?
            }
            Task::NodeClassification => {
                node_task_step(&params, &inputs[0], &labels, &train_idx, acfg, &mut sample_rng)?
            }
        };
        let total = step.clean + acfg.lambda * step.adv;
        if !total.is_finite() || !step.grad.is_finite() {
            return Err(Error::Divergence {
                epoch,
                learning_rate: tcfg.learning_rate,
                detail: format!("clean loss {}, adversarial loss {}", step.clean, step.adv),
            });
        }
        opt.apply(&mut params, &step.grad);
        if !params.is_finite() {
            return Err(Error::Divergence {
                epoch,
                learning_rate: tcfg.learning_rate,
                detail: "non-finite weights after update".into(),
            });
        }

        let (val_accuracy, val_loss) = if val_idx.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            (
                accuracy_prepared(&params, &inputs, &labels, dataset.task, &val_idx)?,
                split_loss(&params, &inputs, &labels, dataset.task, &val_idx)?,
            )
        };
        log.epochs.push(EpochRecord {
            epoch,
            clean_loss: step.clean,
            adv_loss: step.adv,
            total_loss: total,
            val_loss,
            val_accuracy,
        });

        let better = match &best {
            None => true,
            Some(_) if val_idx.is_empty() => true,
            Some((acc, vloss, _)) => {
                val_accuracy > *acc || (val_accuracy == *acc && val_loss < *vloss)
            }
        };
        if better {
            log.best_epoch = epoch;
            log.best_val_accuracy = val_accuracy;
            best = Some((val_accuracy, val_loss, params.clone()));
        }
    }
    let (_, _, best_params) = best.expect("at least one epoch");
    Ok((best_params, log))
}
