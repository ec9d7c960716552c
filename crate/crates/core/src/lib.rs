//! Graph convolutional networks with latent adversarial training, post-hoc
//! explainers (vanilla gradients, GradCAM, GNN-Explainer) and the tools to
//! score them: the model-randomization sanity check and precision against
//! planted ground truth.

pub mod adversarial;
pub mod error;
pub mod experiment;
pub mod explain;
pub mod gcn;
pub mod graph;
pub mod metrics;
pub mod numeric;
pub mod synth;
pub mod util;

pub use error::{Error, Result};
