//! Tabular policy gradient for terminating environments. Costs are learned by a
//! bootstrap ensemble from window-split terminations; the policy sees its running
//! optimistic window cost and discounts by the implied survival probability.

mod ensemble;
mod policy;
mod run;
mod windows;

pub use ensemble::{dynamic_discount, optimistic_cost, train_ensemble, Aggregation, CostEnsemble, EnsembleOptions};
pub use policy::{
    advantages, augment, policy_update, returns, surrogate, surrogate_gradient, AugmentedRollout, AugmentedSoftmax,
    CostBuckets, Discount, Shaping, SoftmaxPolicy, UpdateOptions,
};
pub use run::{run, PgRecord, PgTrace, PgVariant, TermPgConfig};
pub use windows::{split_windows, ReplayBuffer, WindowExample};
