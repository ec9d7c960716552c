//! Dense matrix kernels and the seeded random stream used everywhere else.

mod matrix;
mod rng;

pub use matrix::{ElementwiseOp, Matrix};
pub(crate) use matrix::dot;
pub use rng::{splitmix64, Rng, ALGORITHM as RNG_ALGORITHM};
