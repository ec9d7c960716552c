use crate::error::Result;
use crate::gcn::{backward, forward, GcnInput, Injection, ModelParams, Target, Wants};
use crate::numeric::Matrix;

use super::AdvConfig;

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `∇_{X_n} L` evaluated at `X_n + φ`.
fn perturbation_grad(
    params: &ModelParams,
    input: &GcnInput,
    target: &Target<'_>,
    cfg: &AdvConfig,
    phi: &Matrix,
) -> Result<Matrix> {
    let inj = Injection { layer: cfg.layer, delta: phi.clone() };
    let cache = forward(params, input, None, Some(&inj))?;
    let g = backward(&cache, target, Wants::hidden(cfg.layer.index()))?;
    Ok(g.hidden.expect("requested hidden gradient").1)
}

fn embedding_shape(params: &ModelParams, input: &GcnInput, cfg: &AdvConfig) -> (usize, usize) {
    let n = input.num_nodes();
    match cfg.layer.index() {
        0 => (n, input.features.cols()),
        _ => (n, params.hidden_dim()),
    }
}

/// Fast gradient sign method: `φ = ε · sign(∇_{X_n} L)` with `sign(0) = 0`.
pub fn fgsm_attack(
    params: &ModelParams,
    input: &GcnInput,
    target: &Target<'_>,
    cfg: &AdvConfig,
) -> Result<Matrix> {
    let (r, c) = embedding_shape(params, input, cfg);
    let zero = Matrix::zeros(r, c);
    if cfg.epsilon == 0.0 {
        return Ok(zero);
    }
    let g = perturbation_grad(params, input, target, cfg, &zero)?;
    let eps = cfg.epsilon;
    Ok(g.map(|v| eps * sign(v)))
}

/// Projected gradient ascent in the `l∞` ball: starting from `φ = 0`,
/// `pgd_steps` times `φ ← clip(φ + step · sign(∇ L(X_n + φ)), -ε, ε)`.
pub fn pgd_attack(
    params: &ModelParams,
    input: &GcnInput,
    target: &Target<'_>,
    cfg: &AdvConfig,
) -> Result<Matrix> {
    let (r, c) = embedding_shape(params, input, cfg);
    let mut phi = Matrix::zeros(r, c);
    let eps = cfg.epsilon;
    if eps == 0.0 {
        return Ok(phi);
    }
    let step = cfg.step_size();
    for _ in 0..cfg.pgd_steps {
        let g = perturbation_grad(params, input, target, cfg, &phi)?;
        for (p, &gv) in phi.as_mut_slice().iter_mut().zip(g.as_slice()) {
            *p = (*p + step * sign(gv)).clamp(-eps, eps);
        }
    }
    Ok(phi)
}

/// FGSM when `pgd_steps == 1` and the step equals `ε`, PGD otherwise.
pub fn attack(
    params: &ModelParams,
    input: &GcnInput,
    target: &Target<'_>,
    cfg: &AdvConfig,
) -> Result<Matrix> {
    if cfg.pgd_steps == 1 && cfg.step_size() == cfg.epsilon {
        fgsm_attack(params, input, target, cfg)
    } else {
        pgd_attack(params, input, target, cfg)
    }
}
