use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Task;
use crate::numeric::{Matrix, Rng};
use crate::util::{fingerprint, write_atomic};

pub const MODEL_FORMAT: &str = "advgnn-model";
pub const MODEL_VERSION: u32 = 1;

/// Affine classifier applied to the pooled graph embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    /// `hidden x classes`
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// Weights of the fixed two-layer GCN.
///
/// Graph task: `w1: d x h`, `w2: h x h`, plus an affine [`Head`] after mean
/// readout. Node task: `w1: d x h`, `w2: h x C` emitting logits directly, no
/// head. Convolutions carry no bias in either case.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub task: Task,
    pub w1: Matrix,
    pub w2: Matrix,
    pub head: Option<Head>,
}

/// Architecture descriptor stored alongside serialized weights.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub task: Task,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub num_classes: usize,
    pub conv_layers: usize,
    pub activation: String,
    pub conv_bias: bool,
    /// `"mean"` for graph tasks, `"none"` for node tasks.
    pub readout: String,
    /// `"affine"` (graph task) or `"none"` (node task: the second
    /// convolution emits logits).
    pub head: String,
}

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    shape: [usize; 2],
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    architecture: Architecture,
    #[serde(default)]
    train_config_fingerprint: Option<String>,
    tensors: Vec<TensorRecord>,
}

impl ModelParams {
    /// Glorot-initialized weights, zero bias.
    pub fn init(
        task: Task,
        input_dim: usize,
        hidden_dim: usize,
        num_classes: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let w1 = Matrix::glorot(input_dim, hidden_dim, rng)?;
        Ok(match task {
            Task::GraphClassification => ModelParams {
                task,
                w1,
                w2: Matrix::glorot(hidden_dim, hidden_dim, rng)?,
                head: Some(Head {
                    weight: Matrix::glorot(hidden_dim, num_classes, rng)?,
                    bias: vec![0.0; num_classes],
                }),
            },
            Task::NodeClassification => ModelParams {
                task,
                w1,
                w2: Matrix::glorot(hidden_dim, num_classes, rng)?,
                head: None,
            },
        })
    }

    /// Same architecture, fresh Glorot draw for every weight and zero biases.
    /// `self` is left untouched.
    pub fn randomize(&self, rng: &mut Rng) -> Result<Self> {
        Self::init(
            self.task,
            self.input_dim(),
            self.hidden_dim(),
            self.num_classes(),
            rng,
        )
    }

    pub fn input_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn num_classes(&self) -> usize {
        match &self.head {
            Some(h) => h.weight.cols(),
            None => self.w2.cols(),
        }
    }

    pub fn architecture(&self) -> Architecture {
        let graph = self.task == Task::GraphClassification;
        Architecture {
            task: self.task,
            input_dim: self.input_dim(),
            hidden_dim: self.hidden_dim(),
            num_classes: self.num_classes(),
            conv_layers: 2,
            activation: "relu".into(),
            conv_bias: false,
            readout: if graph { "mean" } else { "none" }.into(),
            head: if graph { "affine" } else { "none" }.into(),
        }
    }

    /// Checks internal shape consistency.
    pub fn validate(&self) -> Result<()> {
        let h = self.hidden_dim();
        if self.w2.rows() != h {
            return Err(Error::Shape(format!(
                "w2 has {} rows, hidden width is {h}",
                self.w2.rows()
            )));
        }
        match (self.task, &self.head) {
            (Task::GraphClassification, Some(head)) => {
                if self.w2.cols() != h || head.weight.rows() != h || head.bias.len() != head.weight.cols() {
                    return Err(Error::Shape(format!(
                        "graph head shapes inconsistent: w2 {:?}, head {:?}, bias {}",
                        self.w2.shape(),
                        head.weight.shape(),
                        head.bias.len()
                    )));
                }
            }
            (Task::NodeClassification, None) => {}
            _ => {
                return Err(Error::Shape(format!(
                    "{:?} model has the wrong head layout",
                    self.task
                )))
            }
        }
        Ok(())
    }

    /// Same shapes, all zeros. Used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        ModelParams {
            task: self.task,
            w1: Matrix::zeros(self.w1.rows(), self.w1.cols()),
            w2: Matrix::zeros(self.w2.rows(), self.w2.cols()),
            head: self.head.as_ref().map(|h| Head {
                weight: Matrix::zeros(h.weight.rows(), h.weight.cols()),
                bias: vec![0.0; h.bias.len()],
            }),
        }
    }

    /// Parameter buffers in a fixed order: `w1`, `w2`, head weight, head bias.
    pub fn buffers(&self) -> Vec<&[f64]> {
        let mut v = vec![self.w1.as_slice(), self.w2.as_slice()];
        if let Some(h) = &self.head {
            v.push(h.weight.as_slice());
            v.push(&h.bias);
        }
        v
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = vec![self.w1.as_mut_slice(), self.w2.as_mut_slice()];
        if let Some(h) = &mut self.head {
            v.push(h.weight.as_mut_slice());
            v.push(&mut h.bias);
        }
        v
    }

    pub fn num_parameters(&self) -> usize {
        self.buffers().iter().map(|b| b.len()).sum()
    }

    /// `self += scale * other`, shapes must agree.
    pub fn add_scaled(&mut self, other: &ModelParams, scale: f64) -> Result<()> {
        let src = other.buffers();
        let mut dst = self.buffers_mut();
        if src.len() != dst.len() || src.iter().zip(&dst).any(|(a, b)| a.len() != b.len()) {
            return Err(Error::Shape("parameter sets differ in layout".into()));
        }
        for (d, s) in dst.iter_mut().zip(src) {
            for (x, y) in d.iter_mut().zip(s) {
                *x += scale * y;
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.buffers().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// Digest of the architecture and every weight bit.
    pub fn fingerprint(&self) -> String {
        let mut bytes = serde_json::to_vec(&self.architecture()).unwrap_or_default();
        for b in self.buffers() {
            for v in b {
                bytes.extend_from_slice(&v.to_bits().to_le_bytes());
            }
        }
        fingerprint(&bytes)
    }

    pub fn to_json(&self, train_config_fingerprint: Option<&str>) -> Result<String> {
        let mut tensors = vec![
            TensorRecord {
                name: "w1".into(),
                shape: [self.w1.rows(), self.w1.cols()],
                data: self.w1.as_slice().to_vec(),
            },
            TensorRecord {
                name: "w2".into(),
                shape: [self.w2.rows(), self.w2.cols()],
                data: self.w2.as_slice().to_vec(),
            },
        ];
        if let Some(h) = &self.head {
            tensors.push(TensorRecord {
                name: "head_w".into(),
                shape: [h.weight.rows(), h.weight.cols()],
                data: h.weight.as_slice().to_vec(),
            });
            tensors.push(TensorRecord {
                name: "head_b".into(),
                shape: [1, h.bias.len()],
                data: h.bias.clone(),
            });
        }
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            architecture: self.architecture(),
            train_config_fingerprint: train_config_fingerprint.map(str::to_owned),
            tensors,
        };
        let mut s = serde_json::to_string_pretty(&file)?;
        s.push('\n');
        Ok(s)
    }

    /// Parses a serialized model; returns it with its training-config fingerprint.
    pub fn from_json(text: &str) -> Result<(Self, Option<String>)> {
        let mut file: ModelFile = serde_json::from_str(text)?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(Error::Format(format!(
                "unsupported model file {} v{}",
                file.format, file.version
            )));
        }
        let mut get = |name: &str| -> Result<Matrix> {
            let pos = file
                .tensors
                .iter()
                .position(|t| t.name == name)
                .ok_or_else(|| Error::Format(format!("missing tensor {name}")))?;
            let t = file.tensors.swap_remove(pos);
            Matrix::from_vec(t.shape[0], t.shape[1], t.data)
        };
        let w1 = get("w1")?;
        let w2 = get("w2")?;
        let head = match file.architecture.task {
            Task::GraphClassification => Some(Head {
                weight: get("head_w")?,
                bias: get("head_b")?.into_vec(),
            }),
            Task::NodeClassification => None,
        };
        let params = ModelParams {
            task: file.architecture.task,
            w1,
            w2,
            head,
        };
        params.validate()?;
        if params.architecture() != file.architecture {
            return Err(Error::Format(
                "architecture descriptor does not match tensor shapes".into(),
            ));
        }
        if !params.is_finite() {
            return Err(Error::Format("non-finite weight".into()));
        }
        Ok((params, file.train_config_fingerprint))
    }

    pub fn save(&self, path: &Path, train_config_fingerprint: Option<&str>) -> Result<()> {
        write_atomic(path, self.to_json(train_config_fingerprint)?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<(Self, Option<String>)> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn randomize_preserves_shapes_and_input() {
        let p = ModelParams::init(Task::GraphClassification, 5, 8, 3, &mut Rng::new(1)).unwrap();
        let before = p.clone();
        let r = p.randomize(&mut Rng::new(2)).unwrap();
        assert_eq!(p, before);
        assert_eq!(r.architecture(), p.architecture());
        assert_eq!(r.head.as_ref().unwrap().bias, vec![0.0; 3]);
        let again = p.randomize(&mut Rng::new(2)).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn distinct_seeds_give_distinct_weights() {
        let p = ModelParams::init(Task::NodeClassification, 4, 6, 2, &mut Rng::new(1)).unwrap();
        for s in 0..100u64 {
            let a = p.randomize(&mut Rng::new(2 * s)).unwrap();
            let b = p.randomize(&mut Rng::new(2 * s + 1)).unwrap();
            assert!(a.w1.sub(&b.w1).unwrap().max_abs() > 0.0);
        }
    }

    #[test]
    fn json_round_trip() {
        for task in [Task::GraphClassification, Task::NodeClassification] {
            let p = ModelParams::init(task, 3, 4, 2, &mut Rng::new(7)).unwrap();
            let text = p.to_json(Some("abc")).unwrap();
            let (back, fp) = ModelParams::from_json(&text).unwrap();
            assert_eq!(back, p);
            assert_eq!(fp.as_deref(), Some("abc"));
            assert_eq!(back.fingerprint(), p.fingerprint());
        }
    }

    #[test]
    fn fingerprint_tracks_weights() {
        let p = ModelParams::init(Task::GraphClassification, 3, 4, 2, &mut Rng::new(7)).unwrap();
        let mut q = p.clone();
        q.w1[(0, 0)] += 1e-12;
        assert_ne!(p.fingerprint(), q.fingerprint());
    }
}
