//! Adversarial training: FGSM/PGD inner maximization on `X0` or the
//! penultimate embedding, gradient-descent outer minimization.

mod attack;
mod config;
mod train;

pub use attack::{attack, fgsm_attack, pgd_attack};
pub use config::{config_fingerprint, AdvConfig, Optimizer, TrainConfig, NORM};
pub use train::{train, EpochRecord, TrainLog};
