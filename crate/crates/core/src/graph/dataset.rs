use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Rng;

use super::{Graph, Label};

pub const DEFAULT_FRACTIONS: (f64, f64, f64) = (0.8, 0.1, 0.1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    GraphClassification,
    NodeClassification,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    Train,
    Val,
    Test,
}

/// Instance indices per split: graph indices for graph classification, node
/// indices of the single graph for node classification.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn get(&self, kind: SplitKind) -> &[usize] {
        match kind {
            SplitKind::Train => &self.train,
            SplitKind::Val => &self.val,
            SplitKind::Test => &self.test,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub task: Task,
    pub num_classes: usize,
    pub graphs: Vec<Graph>,
    pub split: Option<Split>,
    /// Generator settings echoed from the file header, if any.
    pub generator: Option<serde_json::Value>,
    /// Non-fatal notes produced while splitting.
    pub warnings: Vec<String>,
}

impl Dataset {
    pub fn new(task: Task, num_classes: usize, graphs: Vec<Graph>) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::InvalidDataset(format!(
                "need at least 2 classes, got {num_classes}"
            )));
        }
        if graphs.is_empty() {
            return Err(Error::InvalidDataset("no graphs".into()));
        }
        let d = graphs[0].num_features();
        for (i, g) in graphs.iter().enumerate() {
            if g.num_features() != d {
                return Err(Error::InvalidDataset(format!(
                    "graph {i} has {} features, graph 0 has {d}",
                    g.num_features()
                )));
            }
            let labels: Vec<usize> = match (task, g.label()) {
                (Task::GraphClassification, Label::Graph(c)) => vec![*c],
                (Task::NodeClassification, Label::Nodes(y)) => y.clone(),
                _ => {
                    return Err(Error::InvalidDataset(format!(
                        "graph {i} label kind does not match task {task:?}"
                    )))
                }
            };
            if let Some(&c) = labels.iter().find(|&&c| c >= num_classes) {
                return Err(Error::ClassOutOfRange { class: c, num_classes });
            }
        }
        if task == Task::NodeClassification && graphs.len() != 1 {
            return Err(Error::InvalidDataset(format!(
                "node classification needs exactly one graph, got {}",
                graphs.len()
            )));
        }
        Ok(Self {
            task,
            num_classes,
            graphs,
            split: None,
            generator: None,
            warnings: Vec::new(),
        })
    }

    pub fn with_split(mut self, split: Split) -> Result<Self> {
        let n = self.num_instances();
        let mut seen = vec![false; n];
        for &i in split.train.iter().chain(&split.val).chain(&split.test) {
            if i >= n {
                return Err(Error::InvalidDataset(format!("split index {i} out of range")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidDataset(format!("index {i} appears in two splits")));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidDataset("splits do not cover every instance".into()));
        }
        self.split = Some(split);
        Ok(self)
    }

    pub fn num_features(&self) -> usize {
        self.graphs[0].num_features()
    }

    /// Graph count, or node count of the single graph for node tasks.
    pub fn num_instances(&self) -> usize {
        match self.task {
            Task::GraphClassification => self.graphs.len(),
            Task::NodeClassification => self.graphs[0].num_nodes(),
        }
    }

    pub fn instance_labels(&self) -> Vec<usize> {
        match self.task {
            Task::GraphClassification => self
                .graphs
                .iter()
                .map(|g| match g.label() {
                    Label::Graph(c) => *c,
                    Label::Nodes(_) => unreachable!("validated at construction"),
                })
                .collect(),
            Task::NodeClassification => match self.graphs[0].label() {
                Label::Nodes(y) => y.clone(),
                Label::Graph(_) => unreachable!("validated at construction"),
            },
        }
    }

    pub fn split_indices(&self, kind: SplitKind) -> Result<&[usize]> {
        self.split
            .as_ref()
            .map(|s| s.get(kind))
            .ok_or(Error::InvalidDataset("dataset has no split".into()))
    }
}

/// Stratified split. Global split sizes follow largest-remainder rounding of
/// `N · fraction` (ties to the earlier split); each class is then spread over
/// the splits in proportion, handing leftover members out by largest
/// fractional remainder with ties going to the lower class index, then to the
/// earlier split.
pub fn split_dataset(d: &Dataset, fractions: (f64, f64, f64), rng: &mut Rng) -> Result<Dataset> {
    let f = [fractions.0, fractions.1, fractions.2];
    if f.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::config("fractions", "every fraction must be positive"));
    }
    if (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::config("fractions", "fractions must sum to 1"));
    }
    let labels = d.instance_labels();
    let n = labels.len();
    let totals = largest_remainder(n, &f);

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); d.num_classes];
    for (i, &c) in labels.iter().enumerate() {
        members[c].push(i);
    }
    let mut warnings = Vec::new();
    for (c, m) in members.iter_mut().enumerate() {
        rng.shuffle(m);
        if !m.is_empty() && m.len() < 3 {
            warnings.push(format!(
                "class {c} has only {} member(s); it cannot appear in every split",
                m.len()
            ));
        }
    }

    // counts[c][s]
    let mut counts = vec![[0usize; 3]; d.num_classes];
    let mut extras: Vec<(f64, usize, usize)> = Vec::new();
    for (c, m) in members.iter().enumerate() {
        for s in 0..3 {
            let q = m.len() as f64 * f[s];
            counts[c][s] = q.floor() as usize;
            extras.push((q - q.floor(), c, s));
        }
    }
    // Leftovers: prefer giving each split at least one member of each class.
    let mut class_left: Vec<usize> = members
        .iter()
        .enumerate()
        .map(|(c, m)| m.len() - counts[c].iter().sum::<usize>())
        .collect();
    let mut split_left: Vec<isize> = (0..3)
        .map(|s| totals[s] as isize - counts.iter().map(|r| r[s]).sum::<usize>() as isize)
        .collect();
    extras.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap()
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    for &(_, c, s) in &extras {
        if class_left[c] > 0 && split_left[s] > 0 {
            counts[c][s] += 1;
            class_left[c] -= 1;
            split_left[s] -= 1;
        }
    }
    for c in 0..d.num_classes {
        while class_left[c] > 0 {
            let s = (0..3)
                .find(|&s| split_left[s] > 0)
                .unwrap_or(0);
            counts[c][s] += 1;
            class_left[c] -= 1;
            split_left[s] -= 1;
        }
    }

    let mut split = Split::default();
    for (c, m) in members.iter().enumerate() {
        let (a, b) = (counts[c][0], counts[c][0] + counts[c][1]);
        split.train.extend_from_slice(&m[..a]);
        split.val.extend_from_slice(&m[a..b]);
        split.test.extend_from_slice(&m[b..]);
    }
    split.train.sort_unstable();
    split.val.sort_unstable();
    split.test.sort_unstable();
    for (name, part) in [("train", &split.train), ("val", &split.val), ("test", &split.test)] {
        if part.is_empty() {
            warnings.push(format!("{name} split is empty"));
        }
    }

    let mut out = d.clone().with_split(split)?;
    out.warnings.extend(warnings);
    Ok(out)
}

fn largest_remainder(n: usize, f: &[f64; 3]) -> [usize; 3] {
    let mut sizes = [0usize; 3];
    let mut rem = [(0.0, 0usize); 3];
    for s in 0..3 {
        let q = n as f64 * f[s];
        sizes[s] = q.floor() as usize;
        rem[s] = (q - q.floor(), s);
    }
    let mut left = n - sizes.iter().sum::<usize>();
    rem.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    for &(_, s) in rem.iter().cycle() {
        if left == 0 {
            break;
        }
        sizes[s] += 1;
        left -= 1;
    }
    sizes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Matrix;

    fn graph_dataset(labels: &[usize]) -> Dataset {
        let graphs = labels
            .iter()
            .map(|&c| Graph::new(1, vec![], Matrix::filled(1, 2, 1.0), Label::Graph(c)).unwrap())
            .collect();
        Dataset::new(Task::GraphClassification, 2, graphs).unwrap()
    }

    #[test]
    fn ten_graphs_split_8_1_1() {
        let d = graph_dataset(&[0, 1, 0, 1, 0, 1, 0, 1, 0, 1]);
        let s = split_dataset(&d, DEFAULT_FRACTIONS, &mut Rng::new(1)).unwrap();
        let s = s.split.unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (8, 1, 1));
    }

    #[test]
    fn same_seed_same_split() {
        let labels: Vec<usize> = (0..50).map(|i| i % 2).collect();
        let d = graph_dataset(&labels);
        let a = split_dataset(&d, DEFAULT_FRACTIONS, &mut Rng::new(4)).unwrap();
        let b = split_dataset(&d, DEFAULT_FRACTIONS, &mut Rng::new(4)).unwrap();
        assert_eq!(a.split, b.split);
        let c = split_dataset(&d, DEFAULT_FRACTIONS, &mut Rng::new(5)).unwrap();
        assert_ne!(a.split, c.split);
    }

    #[test]
    fn balanced_classes_stay_balanced() {
        let labels: Vec<usize> = (0..100).map(|i| i % 2).collect();
        let d = graph_dataset(&labels);
        let s = split_dataset(&d, (0.6, 0.2, 0.2), &mut Rng::new(9)).unwrap();
        let split = s.split.clone().unwrap();
        // Counting oracle over each split.
        for part in [&split.train, &split.val, &split.test] {
            let ones = part.iter().filter(|&&i| labels[i] == 1).count();
            let zeros = part.len() - ones;
            assert!((ones as isize - zeros as isize).abs() <= 2, "{ones} vs {zeros}");
        }
        assert_eq!(
            (split.train.len(), split.val.len(), split.test.len()),
            (60, 20, 20)
        );
    }

    #[test]
    fn rare_class_warns() {
        let mut labels = vec![0; 20];
        labels[3] = 1;
        let d = graph_dataset(&labels);
        let s = split_dataset(&d, DEFAULT_FRACTIONS, &mut Rng::new(2)).unwrap();
        assert!(!s.warnings.is_empty());
        let split = s.split.unwrap();
        assert_eq!(split.train.len() + split.val.len() + split.test.len(), 20);
    }

    #[test]
    fn bad_fractions_rejected() {
        let d = graph_dataset(&[0, 1]);
        assert!(split_dataset(&d, (0.5, 0.5, 0.1), &mut Rng::new(0)).is_err());
        assert!(split_dataset(&d, (1.0, 0.0, 0.0), &mut Rng::new(0)).is_err());
    }

    #[test]
    fn overlapping_split_rejected() {
        let d = graph_dataset(&[0, 1, 0]);
        let bad = Split { train: vec![0, 1], val: vec![1], test: vec![2] };
        assert!(d.with_split(bad).is_err());
    }
}
