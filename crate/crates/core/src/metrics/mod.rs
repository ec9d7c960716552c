//! Accuracy, rank correlation, the model-randomization sanity check and
//! precision against planted ground truth.

mod accuracy;
mod correlation;
mod precision;
mod sanity;
mod stats;

pub use accuracy::{accuracy, accuracy_prepared, predict};
pub use correlation::{average_ranks, pearson, spearman, Correlation};
pub use precision::{precision_at_gt, precision_at_k, top_k, PrecisionResult, PrecisionSample};
pub use sanity::{
    sanity_check, sanity_check_on, sanity_check_with, CorrelationSample, SanityCheckResult,
};
pub use stats::{mean, paired_t_test, std_dev, PairedTTest};
