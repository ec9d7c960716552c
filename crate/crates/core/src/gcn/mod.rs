//! The fixed two-layer GCN: parameters, forward pass, loss and manual
//! backpropagation to parameters, input features, hidden embeddings and an
//! adjacency mask.

mod engine;
mod params;

pub use engine::{
    backward, backward_from_logits, forward, loss, loss_and_logit_grad, softmax, ForwardCache,
    GcnInput, GradientBundle, Injection, Layer, Target, Wants,
};
pub use params::{Architecture, Head, ModelParams, MODEL_FORMAT, MODEL_VERSION};
