//! Termination MDP data types and the seeded simulator.

mod logistic;
mod simulator;
mod spec;

pub use logistic::{logistic, termination_probability, Kappa};
pub(crate) use logistic::{log_one_minus_sigmoid, log_sigmoid, sigmoid};
pub use simulator::{
    rollout, seeded_rng, step, CostWindow, MarkovPolicy, Policy, SimRng, StepOutcome, Trajectory,
    UniformPolicy,
};
pub use spec::{grid_indices, RewardNoise, SpecShape, TerMdpSpec};
