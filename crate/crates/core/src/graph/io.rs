//! Dataset file format (JSON, version 1).
//!
//! ```text
//! {
//!   "format": "advgnn-dataset", "version": 1,
//!   "task": "graph_classification" | "node_classification",
//!   "num_classes": C,
//!   "generator": { ... }?,                 // generator config echo
//!   "split": { "train": [..], "val": [..], "test": [..] }?,
//!   "graphs": [ {
//!       "num_nodes": n,
//!       "edges": [[u, v], ...],
//!       "features": [[f64; d]; n],
//!       "label": c | [c; n],
//!       "ground_truth_nodes": [v, ...]?,
//!       "ground_truth_edges": [[u, v], ...]?,
//!       "motif_ids": [id | null; n]?
//!   } ]
//! }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Matrix;
use crate::util::write_atomic;

use super::{Dataset, Graph, Label, Split, Task};

pub const DATASET_FORMAT: &str = "advgnn-dataset";
pub const DATASET_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum LabelRecord {
    Graph(usize),
    Nodes(Vec<usize>),
}

#[derive(Serialize, Deserialize)]
struct GraphRecord {
    num_nodes: usize,
    edges: Vec<[usize; 2]>,
    features: Vec<Vec<f64>>,
    label: LabelRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ground_truth_nodes: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ground_truth_edges: Option<Vec<[usize; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    motif_ids: Option<Vec<Option<usize>>>,
}

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    format: String,
    version: u32,
    task: Task,
    num_classes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    generator: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split: Option<Split>,
    graphs: Vec<GraphRecord>,
}

fn pairs(e: &[(usize, usize)]) -> Vec<[usize; 2]> {
    e.iter().map(|&(a, b)| [a, b]).collect()
}

fn unpairs(e: Vec<[usize; 2]>) -> Vec<(usize, usize)> {
    e.into_iter().map(|[a, b]| (a, b)).collect()
}

impl From<&Graph> for GraphRecord {
    fn from(g: &Graph) -> Self {
        GraphRecord {
            num_nodes: g.num_nodes(),
            edges: pairs(g.edges()),
            features: g.features().to_rows(),
            label: match g.label() {
                Label::Graph(c) => LabelRecord::Graph(*c),
                Label::Nodes(y) => LabelRecord::Nodes(y.clone()),
            },
            ground_truth_nodes: g.ground_truth_nodes().map(<[usize]>::to_vec),
            ground_truth_edges: g.ground_truth_edges().map(pairs),
            motif_ids: g.motif_ids().map(<[Option<usize>]>::to_vec),
        }
    }
}

impl TryFrom<GraphRecord> for Graph {
    type Error = Error;

    fn try_from(r: GraphRecord) -> Result<Graph> {
        let features = if r.features.is_empty() {
            Matrix::zeros(0, 0)
        } else {
            Matrix::from_rows(&r.features)?
        };
        let label = match r.label {
            LabelRecord::Graph(c) => Label::Graph(c),
            LabelRecord::Nodes(y) => Label::Nodes(y),
        };
        let mut g = Graph::new(r.num_nodes, unpairs(r.edges), features, label)?;
        if let Some(n) = r.ground_truth_nodes {
            g = g.with_ground_truth_nodes(n)?;
        }
        if let Some(e) = r.ground_truth_edges {
            g = g.with_ground_truth_edges(unpairs(e))?;
        }
        if let Some(m) = r.motif_ids {
            g = g.with_motif_ids(m)?;
        }
        Ok(g)
    }
}

impl Dataset {
    pub fn to_json(&self) -> Result<String> {
        let file = DatasetFile {
            format: DATASET_FORMAT.into(),
            version: DATASET_VERSION,
            task: self.task,
            num_classes: self.num_classes,
            generator: self.generator.clone(),
            split: self.split.clone(),
            graphs: self.graphs.iter().map(GraphRecord::from).collect(),
        };
        let mut s = serde_json::to_string(&file)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Dataset> {
        let file: DatasetFile = serde_json::from_str(text)?;
        if file.format != DATASET_FORMAT {
            return Err(Error::Format(format!(
                "expected format \"{DATASET_FORMAT}\", found \"{}\"",
                file.format
            )));
        }
        if file.version != DATASET_VERSION {
            return Err(Error::Format(format!(
                "unsupported dataset version {}",
                file.version
            )));
        }
        let graphs = file
            .graphs
            .into_iter()
            .map(Graph::try_from)
            .collect::<Result<Vec<_>>>()?;
        let mut d = Dataset::new(file.task, file.num_classes, graphs)?;
        d.generator = file.generator;
        if let Some(s) = file.split {
            d = d.with_split(s)?;
        }
        Ok(d)
    }
}

pub fn write_dataset(d: &Dataset, path: &Path) -> Result<()> {
    write_atomic(path, d.to_json()?.as_bytes())
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    Dataset::from_json(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Dataset {
        let g = Graph::new(
            3,
            vec![(0, 1), (2, 1)],
            Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [0.5, 0.25]]).unwrap(),
            Label::Graph(1),
        )
        .unwrap()
        .with_ground_truth_nodes(vec![1, 2])
        .unwrap()
        .with_ground_truth_edges(vec![(1, 2)])
        .unwrap();
        let h = Graph::new(1, vec![], Matrix::from_rows(&[[0.1, 1e-17]]).unwrap(), Label::Graph(0))
            .unwrap();
        let d = Dataset::new(Task::GraphClassification, 2, vec![g, h]).unwrap();
        d.with_split(Split { train: vec![0], val: vec![], test: vec![1] }).unwrap()
    }

    #[test]
    fn round_trip_is_identity() {
        let d = sample();
        let back = Dataset::from_json(&d.to_json().unwrap()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn rejects_other_formats() {
        let text = sample().to_json().unwrap().replace(DATASET_FORMAT, "other");
        assert!(matches!(Dataset::from_json(&text), Err(Error::Format(_))));
    }

    #[test]
    fn rejects_invalid_graphs() {
        let text = sample().to_json().unwrap().replace("[[0,1],[1,2]]", "[[0,1],[1,1]]");
        assert!(Dataset::from_json(&text).is_err());
    }
}
