use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gcn::Layer;
use crate::util::fingerprint;

/// Perturbation norm. Only `l∞` is supported.
pub const NORM: &str = "linf";

/// Inner-maximization settings for `min_θ [L(θ, X) + λ max_{‖φ‖∞ ≤ ε} L(θ, X_n + φ)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdvConfig {
    pub enabled: bool,
    pub epsilon: f64,
    pub lambda: f64,
    pub pgd_steps: usize,
    /// Step of each signed PGD update; `None` means `epsilon`.
    pub pgd_step_size: Option<f64>,
    pub layer: Layer,
    /// Fraction of training examples (graphs, or nodes for node tasks) that
    /// receive an adversarial term at each step.
    pub perturb_fraction: f64,
}

impl Default for AdvConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            epsilon: 0.0,
            lambda: 1.0,
            pgd_steps: 1,
            pgd_step_size: None,
            layer: Layer::X0,
            perturb_fraction: 1.0,
        }
    }
}

impl AdvConfig {
    pub fn disabled() -> Self {
        Self::default()
    }

    pub fn fgsm(layer: Layer, epsilon: f64) -> Self {
        Self {
            enabled: true,
            epsilon,
            layer,
            ..Self::default()
        }
    }

    pub fn step_size(&self) -> f64 {
        self.pgd_step_size.unwrap_or(self.epsilon)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(Error::config("adversarial.epsilon", "must be finite and >= 0"));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::config("adversarial.lambda", "must be finite and >= 0"));
        }
        if self.pgd_steps < 1 {
            return Err(Error::config("adversarial.pgd_steps", "must be >= 1"));
        }
        if let Some(s) = self.pgd_step_size {
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::config("adversarial.pgd_step_size", "must be > 0"));
            }
        }
        if self.pgd_steps > 1 && !(self.step_size() > 0.0) {
            return Err(Error::config(
                "adversarial.pgd_step_size",
                "must be > 0 when pgd_steps > 1",
            ));
        }
        if !(self.perturb_fraction > 0.0 && self.perturb_fraction <= 1.0) {
            return Err(Error::config("adversarial.perturb_fraction", "must be in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Outer-minimization settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub hidden_dim: usize,
    pub master_seed: u64,
    pub replicate_count: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 0.01,
            optimizer: Optimizer::default(),
            hidden_dim: 64,
            master_seed: 0,
            replicate_count: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("train.epochs", "must be positive"));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::config("train.learning_rate", "must be positive"));
        }
        if self.hidden_dim == 0 {
            return Err(Error::config("train.hidden_dim", "must be positive"));
        }
        if self.replicate_count == 0 {
            return Err(Error::config("train.replicate_count", "must be positive"));
        }
        if let Optimizer::Adam { beta1, beta2, eps } = self.optimizer {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !(eps > 0.0) {
                return Err(Error::config("train.optimizer", "adam needs 0 <= β < 1 and eps > 0"));
            }
        }
        Ok(())
    }
}

/// Digest of both configs, stored with saved models.
pub fn config_fingerprint(tcfg: &TrainConfig, acfg: &AdvConfig) -> String {
    let text = serde_json::to_string(&(tcfg, acfg)).unwrap_or_default();
    fingerprint(text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(AdvConfig::default().validate().is_ok());
        let bad = AdvConfig { epsilon: -0.1, ..AdvConfig::default() };
        assert!(bad.validate().is_err());
        let bad = AdvConfig { pgd_steps: 0, ..AdvConfig::default() };
        assert!(bad.validate().is_err());
        let bad = AdvConfig { pgd_steps: 3, epsilon: 0.0, ..AdvConfig::default() };
        assert!(bad.validate().is_err());
        assert!(TrainConfig { epochs: 0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { learning_rate: 0.0, ..TrainConfig::default() }.validate().is_err());
    }

    #[test]
    fn toml_round_trip() {
        let t = TrainConfig::default();
        let back: TrainConfig = toml::from_str(&toml::to_string(&t).unwrap()).unwrap();
        assert_eq!(back, t);
        let a: AdvConfig = toml::from_str("enabled = true\nepsilon = 0.1\nlayer = \"penultimate\"").unwrap();
        assert_eq!(a.layer, Layer::Penultimate);
        assert_eq!(a.step_size(), 0.1);
    }
}
