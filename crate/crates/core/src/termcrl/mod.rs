//! Optimistic model-based learning in an unknown termination MDP.

mod optimism;
mod run;

pub use optimism::{optimistic_model, BonusSet, EmpiricalModel};
pub use run::{optimal_value, run, RefitSchedule, RegretRecord, RegretTrace, TermCrlConfig, Variant};
