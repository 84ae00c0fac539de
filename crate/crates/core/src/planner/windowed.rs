//! Planning when the terminator only remembers the last `w` step costs.
//!
//! The windowed sum alone is not Markov (the cost that drops out next is needed), so
//! the augmented state carries the last `w - 1` quantized step costs. Only states
//! reachable from the initial state are expanded.

use std::collections::HashMap;

use super::dp::{cost_indices, PlanOptions};
use super::evaluate::CostAwarePolicy;
use super::lattice::CostLattice;
use crate::error::{Result, TermdpError};
use crate::model::{sigmoid, TerMdpSpec};

/// Cap on memoized augmented states.
pub const MAX_WINDOW_STATES: usize = 5_000_000;

type Key = (usize, usize, Vec<i64>);

#[derive(Debug, Clone)]
pub struct WindowedPlan {
    lattice: CostLattice,
    window: usize,
    num_states: usize,
    num_actions: usize,
    stationary: bool,
    cost_index: Vec<i64>,
    table: HashMap<Key, (f64, u32)>,
    initial_value: f64,
}

struct Builder<'a> {
    spec: &'a TerMdpSpec,
    lattice: CostLattice,
    cost_index: Vec<i64>,
    cap: Option<f64>,
    table: HashMap<Key, (f64, u32)>,
}

/// Last `w - 1` costs after appending `cost` to `memory`.
fn shift(memory: &[i64], cost: i64, window: usize) -> Vec<i64> {
    let keep = window - 1;
    if keep == 0 {
        return Vec::new();
    }
    let mut next = Vec::with_capacity(keep);
    let skip = (memory.len() + 1).saturating_sub(keep);
    next.extend(memory.iter().chain(std::iter::once(&cost)).skip(skip));
    next
}

impl Builder<'_> {
    fn value(&mut self, h: usize, s: usize, memory: Vec<i64>) -> Result<f64> {
        if h == self.spec.horizon() {
            return Ok(0.0);
        }
        let key = (h, s, memory);
        if let Some(&(v, _)) = self.table.get(&key) {
            return Ok(v);
        }
        if self.table.len() >= MAX_WINDOW_STATES {
            return Err(TermdpError::InstanceTooLarge {
                leaves: self.table.len() as u64,
                cap: MAX_WINDOW_STATES as u64,
            });
        }
        let window = self.spec.window();
        let prefix: i64 = key.2.iter().sum();
        let mut best = f64::NEG_INFINITY;
        let mut best_a = 0u32;
        for a in 0..self.spec.num_actions() {
            let c = self.cost_index[self.spec.index(h, s, a)];
            let survive = sigmoid(self.spec.bias() - self.lattice.value(prefix + c));
            let next_memory = shift(&key.2, c, window);
            let mut ev = 0.0;
            for (s2, &p) in self.spec.transition_row(h, s, a).iter().enumerate() {
                if p > 0.0 {
                    ev += p * self.value(h + 1, s2, next_memory.clone())?;
                }
            }
            let q = self.spec.reward(h, s, a) + survive * ev;
            if q > best {
                best = q;
                best_a = a as u32;
            }
        }
        if let Some(cap) = self.cap {
            best = best.min(cap);
        }
        self.table.insert(key, (best, best_a));
        Ok(best)
    }
}

/// Optimal plan over `(h, s, last w - 1 quantized costs)`.
pub fn plan_windowed(spec: &TerMdpSpec, lattice: &CostLattice, options: PlanOptions) -> Result<WindowedPlan> {
    if lattice.clip().is_some() {
        return Err(TermdpError::UnsupportedConfiguration(
            "clipping is only defined for the full-memory planner".into(),
        ));
    }
    let mut builder = Builder {
        spec,
        lattice: *lattice,
        cost_index: cost_indices(spec, lattice)?,
        cap: options.clip_values.then_some(spec.horizon() as f64),
        table: HashMap::new(),
    };
    let initial_value = builder.value(0, spec.initial_state(), Vec::new())?;
    Ok(WindowedPlan {
        lattice: *lattice,
        window: spec.window(),
        num_states: spec.num_states(),
        num_actions: spec.num_actions(),
        stationary: spec.stationary(),
        cost_index: builder.cost_index,
        table: builder.table,
        initial_value,
    })
}

impl WindowedPlan {
    pub fn initial_value(&self) -> f64 {
        self.initial_value
    }

    pub fn lattice(&self) -> &CostLattice {
        &self.lattice
    }

    pub fn num_states_expanded(&self) -> usize {
        self.table.len()
    }

    fn step_cost_index(&self, h: usize, s: usize, a: usize) -> i64 {
        let layer = if self.stationary { 0 } else { h };
        self.cost_index[(layer * self.num_states + s) * self.num_actions + a]
    }

    /// Greedy action; states never expanded (unreachable from the start) fall back to 0.
    pub fn action(&self, h: usize, s: usize, memory: &[i64]) -> usize {
        self.table
            .get(&(h, s, memory.to_vec()))
            .map_or(0, |&(_, a)| a as usize)
    }
}

impl CostAwarePolicy for WindowedPlan {
    type Memory = Vec<i64>;

    fn initial_memory(&self) -> Vec<i64> {
        Vec::new()
    }

    fn distribution(&self, h: usize, state: usize, memory: &Vec<i64>, out: &mut Vec<(usize, f64)>) {
        out.push((self.action(h, state, memory), 1.0));
    }

    fn advance(&self, h: usize, state: usize, action: usize, memory: &Vec<i64>) -> Vec<i64> {
        shift(memory, self.step_cost_index(h, state, action), self.window)
    }
}
