//! Policy evaluation under the true model: exact forward propagation on grid-aligned
//! costs, or seeded Monte Carlo.

use std::collections::BTreeMap;

use rand::Rng;

use super::dp::{plan, AugmentedValueTable, PlanOptions};
use super::lattice::CostLattice;
use crate::error::{Result, TermdpError};
use crate::model::{grid_indices, rollout, sigmoid, MarkovPolicy, Policy, SimRng, TerMdpSpec, UniformPolicy};

/// A policy that may condition on a private memory updated after every action, such as
/// the accumulated cost it believes it has incurred.
pub trait CostAwarePolicy {
    type Memory: Clone + Ord;

    fn initial_memory(&self) -> Self::Memory;

    /// Action probabilities in `(h, state, memory)`; deterministic rules push one entry.
    fn distribution(&self, h: usize, state: usize, memory: &Self::Memory, out: &mut Vec<(usize, f64)>);

    fn advance(&self, h: usize, state: usize, action: usize, memory: &Self::Memory) -> Self::Memory;
}

impl<P: CostAwarePolicy + ?Sized> CostAwarePolicy for &P {
    type Memory = P::Memory;

    fn initial_memory(&self) -> Self::Memory {
        (**self).initial_memory()
    }

    fn distribution(&self, h: usize, state: usize, memory: &Self::Memory, out: &mut Vec<(usize, f64)>) {
        (**self).distribution(h, state, memory, out)
    }

    fn advance(&self, h: usize, state: usize, action: usize, memory: &Self::Memory) -> Self::Memory {
        (**self).advance(h, state, action, memory)
    }
}

/// Greedy rule of a planned table; the memory is the accumulated-cost index computed
/// from the costs the table was planned with.
impl CostAwarePolicy for AugmentedValueTable {
    type Memory = i64;

    fn initial_memory(&self) -> i64 {
        0
    }

    fn distribution(&self, h: usize, state: usize, memory: &i64, out: &mut Vec<(usize, f64)>) {
        out.push((self.action(h, state, *memory), 1.0));
    }

    fn advance(&self, h: usize, state: usize, action: usize, memory: &i64) -> i64 {
        self.next_index(h, state, action, *memory)
    }
}

impl CostAwarePolicy for MarkovPolicy {
    type Memory = ();

    fn initial_memory(&self) {}

    fn distribution(&self, h: usize, state: usize, _: &(), out: &mut Vec<(usize, f64)>) {
        out.push((self.actions[h * self.num_states + state], 1.0));
    }

    fn advance(&self, _: usize, _: usize, _: usize, _: &()) {}
}

impl CostAwarePolicy for UniformPolicy {
    type Memory = ();

    fn initial_memory(&self) {}

    fn distribution(&self, _: usize, _: usize, _: &(), out: &mut Vec<(usize, f64)>) {
        let p = 1.0 / self.num_actions as f64;
        out.extend((0..self.num_actions).map(|a| (a, p)));
    }

    fn advance(&self, _: usize, _: usize, _: usize, _: &()) {}
}

/// Adapter running a [`CostAwarePolicy`] in the simulator.
#[derive(Debug, Clone)]
pub struct Tracking<P: CostAwarePolicy> {
    pub inner: P,
    memory: P::Memory,
    scratch: Vec<(usize, f64)>,
}

impl<P: CostAwarePolicy> Tracking<P> {
    pub fn new(inner: P) -> Self {
        let memory = inner.initial_memory();
        Tracking {
            inner,
            memory,
            scratch: Vec::new(),
        }
    }

    pub fn memory(&self) -> &P::Memory {
        &self.memory
    }
}

impl<P: CostAwarePolicy> Policy for Tracking<P> {
    fn reset(&mut self) {
        self.memory = self.inner.initial_memory();
    }

    fn select(&mut self, h: usize, state: usize, rng: &mut SimRng) -> usize {
        self.scratch.clear();
        self.inner.distribution(h, state, &self.memory, &mut self.scratch);
        // deterministic rules consume no randomness
        let action = if self.scratch.len() == 1 {
            self.scratch[0].0
        } else {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut pick = self.scratch.last().map_or(0, |e| e.0);
            for &(a, p) in &self.scratch {
                acc += p;
                if u < acc {
                    pick = a;
                    break;
                }
            }
            pick
        };
        self.memory = self.inner.advance(h, state, action, &self.memory);
        action
    }
}

/// Grid on which the true costs live, with their integer indices.
fn true_grid(spec: &TerMdpSpec) -> Result<(f64, Vec<i64>)> {
    let grid = match spec.cost_grid() {
        Some(g) => g,
        None if spec.costs().iter().all(|&c| c == 0.0) => 1.0,
        None => {
            return Err(TermdpError::UnsupportedConfiguration(
                "exact evaluation needs a declared cost grid; use Monte Carlo".into(),
            ))
        }
    };
    let idx = grid_indices(spec.costs(), grid).ok_or_else(|| {
        TermdpError::UnsupportedConfiguration(format!("costs are not multiples of the grid {grid}"))
    })?;
    Ok((grid, idx))
}

/// True-cost memory: the running sum when the window covers the horizon, otherwise
/// the last `w - 1` step costs (oldest first).
fn push_true_cost(memory: &[i64], cost: i64, window: usize, horizon: usize) -> (i64, Vec<i64>) {
    if window >= horizon {
        let sum = memory.first().copied().unwrap_or(0) + cost;
        (sum, vec![sum])
    } else {
        let sum = memory.iter().sum::<i64>() + cost;
        let mut next: Vec<i64> = memory.to_vec();
        next.push(cost);
        if next.len() >= window {
            next.drain(..next.len() + 1 - window);
        }
        (sum, next)
    }
}

/// Exact `V^π_1` under the true spec, by forward propagation of the joint law of
/// state, true cost memory and policy memory.
pub fn evaluate_exact<P: CostAwarePolicy>(spec: &TerMdpSpec, policy: &P) -> Result<f64> {
    let (grid, cost_idx) = true_grid(spec)?;
    let (horizon, window, bias) = (spec.horizon(), spec.window(), spec.bias());
    let mut current: BTreeMap<(usize, Vec<i64>, P::Memory), f64> = BTreeMap::new();
    let start = if window >= horizon { vec![0] } else { Vec::new() };
    current.insert((spec.initial_state(), start, policy.initial_memory()), 1.0);
    let mut total = 0.0;
    let mut dist = Vec::new();
    for h in 0..horizon {
        let mut next = BTreeMap::new();
        for ((s, tmem, pmem), mass) in &current {
            dist.clear();
            policy.distribution(h, *s, pmem, &mut dist);
            for &(a, pa) in &dist {
                if a >= spec.num_actions() {
                    return Err(TermdpError::invalid(format!("policy chose action {a} at step {h}")));
                }
                if pa == 0.0 {
                    continue;
                }
                let w = mass * pa;
                total += w * spec.reward(h, *s, a);
                if h + 1 == horizon {
                    continue;
                }
                let (sum, tnext) = push_true_cost(tmem, cost_idx[spec.index(h, *s, a)], window, horizon);
                let survive = sigmoid(bias - sum as f64 * grid);
                let pnext = policy.advance(h, *s, a, pmem);
                for (s2, &p) in spec.transition_row(h, *s, a).iter().enumerate() {
                    if p > 0.0 {
                        *next.entry((s2, tnext.clone(), pnext.clone())).or_insert(0.0) += w * survive * p;
                    }
                }
            }
        }
        current = next;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub episodes: usize,
}

pub fn evaluate_monte_carlo<P: CostAwarePolicy>(
    spec: &TerMdpSpec,
    policy: P,
    episodes: usize,
    rng: &mut SimRng,
) -> Result<MonteCarloEstimate> {
    if episodes == 0 {
        return Err(TermdpError::invalid("need at least one evaluation episode"));
    }
    let mut tracking = Tracking::new(policy);
    let (mut sum, mut sq) = (0.0, 0.0);
    for _ in 0..episodes {
        let g = rollout(spec, &mut tracking, rng)?.total_reward();
        sum += g;
        sq += g * g;
    }
    let n = episodes as f64;
    let mean = sum / n;
    let var = if episodes > 1 { ((sq - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
    Ok(MonteCarloEstimate {
        mean,
        std_error: (var / n).sqrt(),
        episodes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantizationGap {
    /// `V*` from planning on the spec's own cost grid.
    pub exact_value: f64,
    /// Value of the quantized plan as seen in the quantized model.
    pub quantized_plan_value: f64,
    /// True value of the quantized plan's greedy policy.
    pub quantized_policy_value: f64,
    /// `V* - V^{π_q}`.
    pub gap: f64,
    /// `H³Δc/2`, plus `2H²e^{-C*}` when clipped.
    pub bound: f64,
}

/// `H³Δc/2 (+ 2H²e^{-C*})`.
pub fn quantization_bound(horizon: usize, lattice: &CostLattice) -> f64 {
    let h = horizon as f64;
    let base = h.powi(3) * lattice.resolution() / 2.0;
    match lattice.clip() {
        Some(c) => base + 2.0 * h * h * (-c).exp(),
        None => base,
    }
}

/// Plans on `lattice` and measures the realized suboptimality against the exact plan.
pub fn quantization_gap(spec: &TerMdpSpec, lattice: &CostLattice) -> Result<QuantizationGap> {
    let (grid, _) = true_grid(spec)?;
    let reference = plan(spec, &CostLattice::new(grid)?, PlanOptions::default())?;
    let exact_value = reference.initial_value(spec.initial_state());
    let table = plan(spec, lattice, PlanOptions::default())?;
    let quantized_policy_value = evaluate_exact(spec, &table)?;
    Ok(QuantizationGap {
        exact_value,
        quantized_plan_value: table.initial_value(spec.initial_state()),
        quantized_policy_value,
        gap: exact_value - quantized_policy_value,
        bound: quantization_bound(spec.horizon(), lattice),
    })
}
