//! Seeded simulation of the logistic terminator.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::logistic::sigmoid;
use super::spec::{RewardNoise, TerMdpSpec};
use crate::error::{Result, TermdpError};

pub type SimRng = ChaCha8Rng;

/// Independent, reproducible stream `stream` of the generator seeded with `seed`.
pub fn seeded_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Sum of the most recent `window` step costs.
#[derive(Debug, Clone, PartialEq)]
pub struct CostWindow {
    window: usize,
    recent: VecDeque<f64>,
}

impl CostWindow {
    pub fn new(window: usize) -> Self {
        CostWindow {
            window: window.max(1),
            recent: VecDeque::with_capacity(window.max(1)),
        }
    }

    /// Adds the cost of the current step, forgetting the one `window` steps old.
    pub fn push(&mut self, cost: f64) -> f64 {
        if self.recent.len() == self.window {
            self.recent.pop_front();
        }
        self.recent.push_back(cost);
        self.sum()
    }

    /// Summed in insertion order so repeated runs agree bit for bit.
    pub fn sum(&self) -> f64 {
        self.recent.iter().sum()
    }

    pub fn window(&self) -> usize {
        self.window
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    Terminated {
        reward: f64,
        accumulated_cost: f64,
    },
    Continued {
        next_state: usize,
        reward: f64,
        accumulated_cost: f64,
    },
}

impl StepOutcome {
    pub fn reward(&self) -> f64 {
        match *self {
            StepOutcome::Terminated { reward, .. } | StepOutcome::Continued { reward, .. } => reward,
        }
    }

    pub fn accumulated_cost(&self) -> f64 {
        match *self {
            StepOutcome::Terminated { accumulated_cost, .. }
            | StepOutcome::Continued { accumulated_cost, .. } => accumulated_cost,
        }
    }
}

/// One environment step at (zero based) step `h`.
///
/// The reward of the step is collected, then the terminator fires with probability
/// `ρ(C - b)` where `C` already includes the current step's cost. Draw order is fixed:
/// reward noise (Bernoulli mode only), termination, next state.
pub fn step(
    spec: &TerMdpSpec,
    h: usize,
    state: usize,
    action: usize,
    window: &mut CostWindow,
    rng: &mut SimRng,
) -> Result<StepOutcome> {
    spec.check_state_action(state, action)?;
    if h >= spec.horizon() {
        return Err(TermdpError::invalid(format!("step {h} beyond horizon {}", spec.horizon())));
    }
    let mean = spec.reward(h, state, action);
    let reward = match spec.reward_noise() {
        RewardNoise::Deterministic => mean,
        RewardNoise::Bernoulli => {
            if rng.random::<f64>() < mean {
                1.0
            } else {
                0.0
            }
        }
    };
    let accumulated_cost = window.push(spec.cost(h, state, action));
    let p_term = sigmoid(accumulated_cost - spec.bias());
    if rng.random::<f64>() < p_term {
        return Ok(StepOutcome::Terminated {
            reward,
            accumulated_cost,
        });
    }
    let next_state = sample_index(spec.transition_row(h, state, action), rng);
    Ok(StepOutcome::Continued {
        next_state,
        reward,
        accumulated_cost,
    })
}

pub(crate) fn sample_index(probs: &[f64], rng: &mut SimRng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding can leave `acc` a hair below 1; fall back to the last positive entry.
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1)
}

/// A decision rule consulted once per step. Policies that depend on accumulated
/// cost keep their own memory and update it inside `select`.
pub trait Policy {
    fn reset(&mut self) {}

    fn select(&mut self, h: usize, state: usize, rng: &mut SimRng) -> usize;
}

impl<P: Policy + ?Sized> Policy for &mut P {
    fn reset(&mut self) {
        (**self).reset()
    }

    fn select(&mut self, h: usize, state: usize, rng: &mut SimRng) -> usize {
        (**self).select(h, state, rng)
    }
}

/// Picks every action with equal probability.
#[derive(Debug, Clone, Copy)]
pub struct UniformPolicy {
    pub num_actions: usize,
}

impl Policy for UniformPolicy {
    fn select(&mut self, _h: usize, _state: usize, rng: &mut SimRng) -> usize {
        rng.random_range(0..self.num_actions)
    }
}

/// Deterministic Markov policy stored as `actions[h * S + s]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovPolicy {
    pub num_states: usize,
    pub actions: Vec<usize>,
}

impl MarkovPolicy {
    pub fn constant(num_states: usize, horizon: usize, action: usize) -> Self {
        MarkovPolicy {
            num_states,
            actions: vec![action; num_states * horizon],
        }
    }
}

impl Policy for MarkovPolicy {
    fn select(&mut self, h: usize, state: usize, _rng: &mut SimRng) -> usize {
        self.actions[h * self.num_states + state]
    }
}

/// One episode. `termination_time` is one based (`t*`), matching the step at which
/// the terminator fired; after it nothing is recorded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub termination_time: Option<usize>,
    pub accumulated_costs: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn terminated(&self) -> bool {
        self.termination_time.is_some()
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

pub fn rollout<P: Policy + ?Sized>(spec: &TerMdpSpec, policy: &mut P, rng: &mut SimRng) -> Result<Trajectory> {
    let horizon = spec.horizon();
    let mut traj = Trajectory {
        states: Vec::with_capacity(horizon),
        actions: Vec::with_capacity(horizon),
        rewards: Vec::with_capacity(horizon),
        termination_time: None,
        accumulated_costs: Vec::with_capacity(horizon),
    };
    let mut window = CostWindow::new(spec.window());
    let mut state = spec.initial_state();
    policy.reset();
    for h in 0..horizon {
        let action = policy.select(h, state, rng);
        if action >= spec.num_actions() {
            return Err(TermdpError::invalid(format!(
                "policy returned action {action} at step {h}; only {} actions exist",
                spec.num_actions()
            )));
        }
        let outcome = step(spec, h, state, action, &mut window, rng)?;
        traj.states.push(state);
        traj.actions.push(action);
        traj.rewards.push(outcome.reward());
        traj.accumulated_costs.push(outcome.accumulated_cost());
        match outcome {
            StepOutcome::Terminated { .. } => {
                traj.termination_time = Some(h + 1);
                break;
            }
            StepOutcome::Continued { next_state, .. } => state = next_state,
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::spec::SpecShape;

    fn single_state(horizon: usize, cost: f64, bias: f64) -> TerMdpSpec {
        let shape = SpecShape::new(1, 1, horizon, true);
        TerMdpSpec::new(shape, vec![1.0], vec![1.0], vec![cost], bias, None, None).unwrap()
    }

    #[test]
    fn window_forgets_old_costs() {
        let mut w = CostWindow::new(2);
        assert_eq!(w.push(1.0), 1.0);
        assert_eq!(w.push(2.0), 3.0);
        assert_eq!(w.push(4.0), 6.0);
    }

    #[test]
    fn never_terminates_with_huge_bias() {
        let spec = single_state(50, 0.0, 800.0);
        let mut rng = seeded_rng(1, 0);
        for _ in 0..100 {
            let t = rollout(&spec, &mut UniformPolicy { num_actions: 1 }, &mut rng).unwrap();
            assert_eq!(t.len(), 50);
            assert!(!t.terminated());
        }
    }

    #[test]
    fn huge_cost_terminates_at_first_step() {
        let spec = single_state(10, 100.0, 0.0);
        let mut rng = seeded_rng(2, 0);
        for _ in 0..100 {
            let t = rollout(&spec, &mut UniformPolicy { num_actions: 1 }, &mut rng).unwrap();
            assert_eq!(t.termination_time, Some(1));
            assert_eq!(t.rewards.len(), 1);
        }
    }

    #[test]
    fn step_frequency_matches_logistic() {
        let spec = single_state(1, 0.5, 0.0);
        let mut rng = seeded_rng(3, 0);
        let n = 100_000;
        let mut hits = 0usize;
        for _ in 0..n {
            let mut w = CostWindow::new(1);
            if let StepOutcome::Terminated { .. } = step(&spec, 0, 0, 0, &mut w, &mut rng).unwrap() {
                hits += 1;
            }
        }
        let p = 1.0 / (1.0 + (-0.5f64).exp());
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        let freq = hits as f64 / n as f64;
        assert!((freq - p).abs() < 3.0 * sigma, "freq {freq} vs {p}");
    }

    #[test]
    fn out_of_range_inputs_are_rejected() {
        let spec = single_state(3, 0.0, 0.0);
        let mut rng = seeded_rng(0, 0);
        let mut w = CostWindow::new(1);
        assert!(step(&spec, 0, 1, 0, &mut w, &mut rng).is_err());
        assert!(step(&spec, 0, 0, 1, &mut w, &mut rng).is_err());
        let mut bad = MarkovPolicy::constant(1, 3, 5);
        assert!(rollout(&spec, &mut bad, &mut rng).is_err());
    }

    #[test]
    fn horizon_one_gives_single_step() {
        let spec = single_state(1, 0.0, 0.0);
        let mut rng = seeded_rng(4, 0);
        let t = rollout(&spec, &mut UniformPolicy { num_actions: 1 }, &mut rng).unwrap();
        assert_eq!(t.len(), 1);
    }
}
