//! Synthetic datasets with planted ground-truth explanations.

mod ba;
mod iso;
mod motif;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::graph::Dataset;
use crate::numeric::Rng;

pub use ba::{gen_ba_shapes, preferential_attachment, BaShapesConfig, HOUSE_EDGES};
pub use iso::contains_motif;
pub use motif::{gen_motif_graphs, MotifGraphConfig, MotifSpec};

/// Either generator, tagged by `kind` in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorConfig {
    MotifGraphs(MotifGraphConfig),
    BaShapes(BaShapesConfig),
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig::MotifGraphs(MotifGraphConfig::default())
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            GeneratorConfig::MotifGraphs(c) => c.validate(),
            GeneratorConfig::BaShapes(c) => c.validate(),
        }
    }

    pub fn generate(&self, rng: &Rng) -> Result<Dataset> {
        match self {
            GeneratorConfig::MotifGraphs(c) => gen_motif_graphs(c, rng),
            GeneratorConfig::BaShapes(c) => gen_ba_shapes(c, rng),
        }
    }
}

/// Generator settings plus seed, stored in the dataset header.
pub(crate) fn provenance(config: &GeneratorConfig, rng: &Rng) -> serde_json::Value {
    serde_json::json!({
        "config": config,
        "seed": rng.seed(),
        "rng": rng.algorithm(),
    })
}
