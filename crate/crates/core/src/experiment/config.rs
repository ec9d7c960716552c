use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adversarial::{AdvConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::explain::{ExplainerConfig, Method};
use crate::gcn::Layer;
use crate::graph::{read_dataset, split_dataset, Dataset, Task, DEFAULT_FRACTIONS};
use crate::numeric::Rng;
use crate::synth::GeneratorConfig;

/// Where the data comes from: a dataset file, or a generator run from the
/// experiment's seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSource {
    pub path: Option<PathBuf>,
    pub generator: Option<GeneratorConfig>,
}

impl Default for DatasetSource {
    fn default() -> Self {
        Self { path: None, generator: Some(GeneratorConfig::default()) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        let (train, val, test) = DEFAULT_FRACTIONS;
        Self { train, val, test }
    }
}

impl SplitConfig {
    pub fn fractions(&self) -> (f64, f64, f64) {
        (self.train, self.val, self.test)
    }
}

/// How explanations are scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Evaluation {
    /// Model-randomization sanity check; ε minimizes validation correlation.
    SanityCheck,
    /// Precision against planted ground truth; ε maximizes validation precision.
    Precision,
}

impl Evaluation {
    pub fn for_task(task: Task) -> Self {
        match task {
            Task::GraphClassification => Evaluation::SanityCheck,
            Task::NodeClassification => Evaluation::Precision,
        }
    }

    pub fn metric_name(self) -> &'static str {
        match self {
            Evaluation::SanityCheck => "average_correlation",
            Evaluation::Precision => "average_precision",
        }
    }
}

/// The adversarial settings and explainers crossed into grid cells. Only
/// `epsilons` is swept; the other fields are shared by every adversarial
/// cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Include the non-adversarial baseline.
    pub baseline: bool,
    pub layers: Vec<Layer>,
    pub epsilons: Vec<f64>,
    pub lambda: f64,
    pub pgd_steps: usize,
    pub pgd_step_size: Option<f64>,
    pub perturb_fraction: f64,
    pub methods: Vec<Method>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            baseline: true,
            layers: vec![Layer::X0, Layer::Penultimate],
            epsilons: vec![0.05, 0.1, 0.2, 0.5],
            lambda: 1.0,
            pgd_steps: 1,
            pgd_step_size: None,
            perturb_fraction: 1.0,
            methods: vec![Method::VanillaGrad, Method::GradCam],
        }
    }
}

impl GridConfig {
    pub fn adv_config(&self, layer: Layer, epsilon: f64) -> AdvConfig {
        AdvConfig {
            enabled: true,
            epsilon,
            lambda: self.lambda,
            pgd_steps: self.pgd_steps,
            pgd_step_size: self.pgd_step_size,
            layer,
            perturb_fraction: self.perturb_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Root of every random stream in the run. Overrides `train.master_seed`.
    pub master_seed: u64,
    /// Models per cell. Overrides `train.replicate_count`.
    pub replicate_count: usize,
    /// Randomized models per sanity check on the test split.
    pub trials: usize,
    /// Randomized models per sanity check during the ε sweep.
    pub sweep_trials: usize,
    /// `None` picks the sanity check for graph tasks, precision for node tasks.
    pub evaluation: Option<Evaluation>,
    /// Cap on explained instances per split (all when `None`).
    pub max_instances: Option<usize>,
    /// Test instances rendered as DOT per cell (replicate 0).
    pub dot_samples: usize,
    /// Accuracy loss, as a fraction, tolerated by the correlation criterion
    /// when choosing ε.
    pub max_accuracy_drop: f64,
    pub output_dir: Option<PathBuf>,
    pub dataset: DatasetSource,
    pub split: SplitConfig,
    pub train: TrainConfig,
    /// Settings for the `train` subcommand; experiments use `grid`.
    pub adversarial: AdvConfig,
    pub grid: GridConfig,
    pub explainer: ExplainerConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            master_seed: 0,
            replicate_count: 10,
            trials: 50,
            sweep_trials: 10,
            evaluation: None,
            max_instances: None,
            dot_samples: 3,
            max_accuracy_drop: 0.02,
            output_dir: None,
            dataset: DatasetSource::default(),
            split: SplitConfig::default(),
            train: TrainConfig::default(),
            adversarial: AdvConfig::default(),
            grid: GridConfig::default(),
            explainer: ExplainerConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.sync_train();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(p) = cfg.dataset.path.as_mut() {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    /// Copies the top-level seed and replicate count into `train`.
    pub fn sync_train(&mut self) {
        self.train.master_seed = self.master_seed;
        self.train.replicate_count = self.replicate_count;
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self.sync_train();
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.adversarial.validate()?;
        self.explainer.validate()?;
        if self.replicate_count == 0 {
            return Err(Error::config("replicate_count", "must be >= 1"));
        }
        if self.trials == 0 {
            return Err(Error::config("trials", "must be >= 1"));
        }
        if self.sweep_trials == 0 {
            return Err(Error::config("sweep_trials", "must be >= 1"));
        }
        if self.max_instances == Some(0) {
            return Err(Error::config("max_instances", "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.max_accuracy_drop) {
            return Err(Error::config("max_accuracy_drop", "must be in [0, 1]"));
        }
        let g = &self.grid;
        if !g.baseline && g.layers.is_empty() {
            return Err(Error::config("grid", "empty grid: enable the baseline or list layers"));
        }
        if g.methods.is_empty() {
            return Err(Error::config("grid.methods", "must list at least one explainer"));
        }
        if !g.layers.is_empty() {
            if g.epsilons.is_empty() {
                return Err(Error::config("grid.epsilons", "must list at least one value"));
            }
            for &e in &g.epsilons {
                g.adv_config(Layer::X0, e).validate()?;
            }
        }
        match (&self.dataset.path, &self.dataset.generator) {
            (None, None) => return Err(Error::config("dataset", "needs a path or a generator")),
            (Some(p), _) if p.as_os_str().is_empty() => {
                return Err(Error::config("dataset.path", "is empty"))
            }
            (_, Some(gen)) => gen.validate()?,
            _ => {}
        }
        let s = self.split;
        if [s.train, s.val, s.test].iter().any(|&f| !(f > 0.0)) || ((s.train + s.val + s.test) - 1.0).abs() > 1e-9 {
            return Err(Error::config("split", "fractions must be positive and sum to 1"));
        }
        Ok(())
    }

    /// Loads or generates the dataset and splits it unless the file already
    /// carries a split. Generation uses child stream 0 of the master seed,
    /// splitting child stream 1.
    pub fn load_dataset(&self) -> Result<Dataset> {
        let master = Rng::new(self.master_seed);
        let d = match (&self.dataset.path, &self.dataset.generator) {
            (Some(p), _) => read_dataset(p)?,
            (None, Some(gen)) => gen.generate(&master.child(0))?,
            (None, None) => return Err(Error::config("dataset", "needs a path or a generator")),
        };
        if d.split.is_some() {
            return Ok(d);
        }
        split_dataset(&d, self.split.fractions(), &mut master.child(1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_file_and_overrides() {
        let cfg = ExperimentConfig::from_toml(
            "master_seed = 9\nreplicate_count = 2\n[grid]\nlayers = [\"x0\"]\nmethods = [\"vg\"]\n",
        )
        .unwrap();
        assert_eq!(cfg.train.master_seed, 9);
        assert_eq!(cfg.train.replicate_count, 2);
        assert_eq!(cfg.grid.methods, vec![Method::VanillaGrad]);
    }

    #[test]
    fn validation_names_the_field() {
        let err = ExperimentConfig::from_toml("[dataset.generator]\nkind = \"motif_graphs\"\nclass_balance = 1.5\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("class_balance"), "{err}");
        let err = ExperimentConfig::from_toml("[grid]\nbaseline = false\nlayers = []\n").unwrap_err();
        assert!(err.is_validation());
        assert!(ExperimentConfig::from_toml("bogus = 1").is_err());
    }
}
