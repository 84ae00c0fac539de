//! Environment generators, experiment configuration and result files.

pub mod commands;
mod config;
mod experiment;
mod generators;
pub mod schema;

pub use config::{AlgorithmConfig, AlgorithmName, EnvConfig, ExperimentConfig, OutputConfig, PlannedAlgorithm, RunPlan};
pub use experiment::{run_experiment, verify_replay, Manifest, ReplayReport, RunEntry};
pub use generators::{chain, gridworld_coins, random_termdp, road_layout, CostSign, Generator, RandomCosts, RoadLayout};
