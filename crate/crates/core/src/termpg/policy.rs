//! Tabular softmax policy over `(state, cost bucket)` and its advantage-weighted update.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TermdpError};
use crate::model::Trajectory;
use crate::planner::CostAwarePolicy;

/// Buckets of the agent's running window cost: `[0, Δ)`, `[Δ, 2Δ)`, ..., with
/// negatives folded into the first bucket and overflow into the last.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBuckets {
    pub width: f64,
    pub count: usize,
}

impl CostBuckets {
    pub fn new(width: f64, count: usize) -> Result<Self> {
        if !(width.is_finite() && width > 0.0) || count == 0 {
            return Err(TermdpError::invalid("bucket width must be positive and count at least 1"));
        }
        Ok(CostBuckets { width, count })
    }

    /// A single bucket: the policy ignores costs.
    pub fn none() -> Self {
        CostBuckets { width: 1.0, count: 1 }
    }

    pub fn bucket(&self, c: f64) -> usize {
        // NaN lands in the first bucket too
        if c.is_nan() || c <= 0.0 {
            return 0;
        }
        ((c / self.width).floor() as usize).min(self.count - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxPolicy {
    pub num_states: usize,
    pub num_actions: usize,
    pub buckets: CostBuckets,
    pub logits: Vec<f64>,
}

impl SoftmaxPolicy {
    pub fn new(num_states: usize, num_actions: usize, buckets: CostBuckets) -> Self {
        SoftmaxPolicy {
            num_states,
            num_actions,
            buckets,
            logits: vec![0.0; num_states * buckets.count * num_actions],
        }
    }

    pub fn num_inputs(&self) -> usize {
        self.num_states * self.buckets.count
    }

    pub fn input(&self, state: usize, window_cost: f64) -> usize {
        state * self.buckets.count + self.buckets.bucket(window_cost)
    }

    pub fn probabilities(&self, input: usize, out: &mut Vec<f64>) {
        let row = &self.logits[input * self.num_actions..(input + 1) * self.num_actions];
        let top = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        out.clear();
        out.extend(row.iter().map(|&z| (z - top).exp()));
        let total: f64 = out.iter().sum();
        for p in out.iter_mut() {
            *p /= total;
        }
    }
}

/// The softmax policy as seen during a rollout: its memory holds the last `window`
/// `(state, action)` pairs, and the bucket input is their summed cost under `costs`.
#[derive(Debug, Clone)]
pub struct AugmentedSoftmax<'a> {
    pub policy: &'a SoftmaxPolicy,
    pub costs: &'a [f64],
    pub window: usize,
}

impl AugmentedSoftmax<'_> {
    fn window_cost(&self, memory: &[(usize, usize)]) -> f64 {
        memory.iter().map(|&(s, a)| self.costs[s * self.policy.num_actions + a]).sum()
    }
}

impl CostAwarePolicy for AugmentedSoftmax<'_> {
    type Memory = Vec<(usize, usize)>;

    fn initial_memory(&self) -> Self::Memory {
        Vec::new()
    }

    fn distribution(&self, _: usize, state: usize, memory: &Self::Memory, out: &mut Vec<(usize, f64)>) {
        let mut probs = Vec::with_capacity(self.policy.num_actions);
        self.policy.probabilities(self.policy.input(state, self.window_cost(memory)), &mut probs);
        out.extend(probs.into_iter().enumerate());
    }

    fn advance(&self, _: usize, state: usize, action: usize, memory: &Self::Memory) -> Self::Memory {
        let mut next = memory.clone();
        next.push((state, action));
        if next.len() > self.window {
            next.remove(0);
        }
        next
    }
}

/// A rollout re-expressed for the update: policy inputs, shaped rewards and the
/// per-step discount applied to what follows each step.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedRollout {
    pub inputs: Vec<usize>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub discounts: Vec<f64>,
}

/// Reward shaping applied while augmenting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Shaping {
    None,
    /// Subtract `p` at the termination step.
    TerminationPenalty(f64),
    /// Subtract `alpha` times the agent's window cost at every step.
    CostPenalty(f64),
}

/// Discount used when augmenting a rollout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Discount {
    Constant(f64),
    /// `1 − ρ(C − b)` with `C` the window cost including the current step.
    Dynamic { bias: f64 },
}

/// Recomputes the agent's window costs along `traj` with the per-`(s, a)` table `costs`.
pub fn augment(
    traj: &Trajectory,
    policy: &SoftmaxPolicy,
    costs: &[f64],
    window: usize,
    discount: Discount,
    shaping: Shaping,
) -> AugmentedRollout {
    let a_n = policy.num_actions;
    let mut recent: VecDeque<f64> = VecDeque::with_capacity(window + 1);
    let len = traj.len();
    let mut out = AugmentedRollout {
        inputs: Vec::with_capacity(len),
        actions: traj.actions.clone(),
        rewards: Vec::with_capacity(len),
        discounts: Vec::with_capacity(len),
    };
    for t in 0..len {
        let (s, a) = (traj.states[t], traj.actions[t]);
        let before: f64 = recent.iter().sum();
        out.inputs.push(policy.input(s, before));
        recent.push_back(costs[s * a_n + a]);
        if recent.len() > window {
            recent.pop_front();
        }
        let current: f64 = recent.iter().sum();
        let mut r = traj.rewards[t];
        match shaping {
            Shaping::None => {}
            Shaping::TerminationPenalty(p) => {
                if traj.termination_time == Some(t + 1) {
                    r -= p;
                }
            }
            Shaping::CostPenalty(alpha) => r -= alpha * current,
        }
        out.rewards.push(r);
        out.discounts.push(match discount {
            Discount::Constant(g) => g,
            Discount::Dynamic { bias } => super::dynamic_discount(current, bias),
        });
    }
    out
}

/// Generalized advantage estimates with per-step discounts; `values` is indexed by
/// policy input and the value after the last step is zero.
pub fn advantages(rollout: &AugmentedRollout, values: &[f64], gae_lambda: f64) -> Vec<f64> {
    let len = rollout.rewards.len();
    let mut adv = vec![0.0; len];
    let mut next_adv = 0.0;
    for t in (0..len).rev() {
        let v = values[rollout.inputs[t]];
        let v_next = if t + 1 < len { values[rollout.inputs[t + 1]] } else { 0.0 };
        let g = rollout.discounts[t];
        let delta = rollout.rewards[t] + g * v_next - v;
        next_adv = delta + g * gae_lambda * next_adv;
        adv[t] = next_adv;
    }
    adv
}

/// Discounted returns-to-go with per-step discounts.
pub fn returns(rollout: &AugmentedRollout) -> Vec<f64> {
    let len = rollout.rewards.len();
    let mut out = vec![0.0; len];
    let mut acc = 0.0;
    for t in (0..len).rev() {
        acc = rollout.rewards[t] + rollout.discounts[t] * acc;
        out[t] = acc;
    }
    out
}

/// `(1/N) Σ_i Σ_t A_it log π(a_it | x_it)` with the advantages held fixed.
pub fn surrogate(policy: &SoftmaxPolicy, rollouts: &[AugmentedRollout], advs: &[Vec<f64>]) -> f64 {
    let mut probs = Vec::new();
    let mut total = 0.0;
    for (r, adv) in rollouts.iter().zip(advs) {
        for t in 0..r.inputs.len() {
            policy.probabilities(r.inputs[t], &mut probs);
            total += adv[t] * probs[r.actions[t]].ln();
        }
    }
    total / rollouts.len().max(1) as f64
}

/// Gradient of [`surrogate`] with respect to the logits.
pub fn surrogate_gradient(policy: &SoftmaxPolicy, rollouts: &[AugmentedRollout], advs: &[Vec<f64>]) -> Vec<f64> {
    let a_n = policy.num_actions;
    let mut grad = vec![0.0; policy.logits.len()];
    let mut probs = Vec::new();
    let scale = 1.0 / rollouts.len().max(1) as f64;
    for (r, adv) in rollouts.iter().zip(advs) {
        for ((&x, &taken), &g) in r.inputs.iter().zip(&r.actions).zip(adv) {
            policy.probabilities(x, &mut probs);
            for (b, p) in probs.iter().enumerate() {
                let ind = if b == taken { 1.0 } else { 0.0 };
                grad[x * a_n + b] += scale * g * (ind - p);
            }
        }
    }
    grad
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateOptions {
    pub learning_rate: f64,
    pub gae_lambda: f64,
    /// Step size of the running-average value baseline.
    pub value_rate: f64,
}

/// One ascent step on the surrogate, followed by a baseline update toward the
/// discounted returns. Fails without touching the policy if any advantage is not finite.
pub fn policy_update(
    policy: &mut SoftmaxPolicy,
    values: &mut [f64],
    rollouts: &[AugmentedRollout],
    options: &UpdateOptions,
) -> Result<()> {
    let advs: Vec<Vec<f64>> = rollouts.iter().map(|r| advantages(r, values, options.gae_lambda)).collect();
    for (i, adv) in advs.iter().enumerate() {
        if let Some(t) = adv.iter().position(|a| !a.is_finite()) {
            let r = &rollouts[i];
            return Err(TermdpError::NumericFailure(format!(
                "advantage of rollout {i} step {t} is {}: reward {}, discount {}, input {}",
                adv[t], r.rewards[t], r.discounts[t], r.inputs[t]
            )));
        }
    }
    let grad = surrogate_gradient(policy, rollouts, &advs);
    for (z, g) in policy.logits.iter_mut().zip(&grad) {
        *z += options.learning_rate * g;
    }
    for r in rollouts {
        for (t, g) in returns(r).into_iter().enumerate() {
            let v = &mut values[r.inputs[t]];
            *v += options.value_rate * (g - *v);
        }
    }
    Ok(())
}
