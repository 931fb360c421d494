//! Optimisation loops for the short-term model and the long-term aggregation.

mod optimizer;
mod trainer;

pub use optimizer::{clip_grad_norm, AdamW, OptimizerConfig};
pub use trainer::{
    train_long_term, train_short_term, EpochSummary, LogRecord, LongTermOutcome, TrainState, TrainingConfig,
};

#[cfg(test)]
mod tests;
