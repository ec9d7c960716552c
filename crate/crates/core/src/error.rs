use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid configuration: {field}: {reason}")]
    Config { field: String, reason: String },

    #[error("invalid layer index {0}")]
    InvalidLayer(usize),

    #[error("class {class} out of range for {num_classes} classes")]
    ClassOutOfRange { class: usize, num_classes: usize },

    #[error("training diverged at epoch {epoch} (learning rate {learning_rate}): {detail}")]
    Divergence {
        epoch: usize,
        learning_rate: f64,
        detail: String,
    },

    #[error("explainer objective became non-finite at iteration {iteration}")]
    ExplainerDiverged { iteration: usize },

    #[error(
        "graph has no ground-truth {0}; precision needs a dataset with planted motifs \
         (see `generate` with the motif or ba-shapes generator)"
    )]
    MissingGroundTruth(&'static str),

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("generator error: {0}")]
    Generator(String),

    #[error("experiment cell failed: {0}")]
    CellFailed(String),

    #[error("model/dataset mismatch: {0}")]
    Mismatch(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Validation problems (bad input or config) as opposed to runtime failures.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Config { .. }
                | Error::InvalidGraph(_)
                | Error::InvalidDataset(_)
                | Error::Mismatch(_)
                | Error::Format(_)
                | Error::TomlDe(_)
                | Error::ClassOutOfRange { .. }
                | Error::InvalidLayer(_)
                | Error::MissingGroundTruth(_)
        )
    }
}
