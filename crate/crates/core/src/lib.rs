//! Tabular toolkit for termination MDPs: episodic MDPs in which an outside observer
//! ends the episode with a probability that is logistic in the (windowed) sum of
//! unknown per-step costs.
//!
//! * [`model`] – spec, logistic terminator, seeded rollouts.
//! * [`estimator`] – regularized maximum likelihood for the costs and local confidence radii.
//! * [`planner`] – dynamic programming on states augmented with quantized accumulated cost.
//! * [`oracle`] – brute-force enumeration used to check everything else.
//! * [`termcrl`] – optimistic model-based learning with regret tracking.
//! * [`termpg`] – tabular policy gradient with a bootstrap cost ensemble and dynamic discount.
//! * [`harness`] – environment generators, experiment configs and CSV output.

pub mod error;
pub mod harness;
pub mod estimator;
pub mod model;
pub mod oracle;
pub mod planner;
pub mod termcrl;
pub mod termpg;

pub use error::{Result, TermdpError};
