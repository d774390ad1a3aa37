//! Fitting network transitions to observed multi-step block densities.

mod flowhon;
mod loss;
mod pgd;

pub use flowhon::{optimize_network, train_flowhon, update_a, IterationLog};
pub use loss::{
    column_penalty, estimate_blocks, forward, kld_term, project, DensitySeries, Objective, Target,
};
pub use pgd::{
    initial_state_transitions, normalize_or, optimize_t, optimize_ts, series_loss, Fit, StepRule,
    TrainConfig,
};
