use serde::{Deserialize, Serialize};

use crate::error::{Result, TermdpError};

const ROW_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RewardNoise {
    /// The mean reward is paid out exactly.
    #[default]
    Deterministic,
    /// A Bernoulli draw with the mean reward as success probability.
    Bernoulli,
}

/// A tabular MDP with an exogenous logistic terminator.
///
/// Step indices `h` are zero based in code (`0..horizon`). Tables are stored once per
/// layer, with a single layer when the spec is stationary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpecFile", into = "SpecFile")]
pub struct TerMdpSpec {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    stationary: bool,
    transitions: Vec<f64>,
    rewards: Vec<f64>,
    costs: Vec<f64>,
    bias: f64,
    window: usize,
    norm_bound: f64,
    reward_noise: RewardNoise,
    initial_state: usize,
    cost_grid: Option<f64>,
}

/// Dimensions and scalar settings shared by every constructor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpecShape {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub stationary: bool,
}

impl SpecShape {
    pub fn new(num_states: usize, num_actions: usize, horizon: usize, stationary: bool) -> Self {
        SpecShape {
            num_states,
            num_actions,
            horizon,
            stationary,
        }
    }

    pub fn layers(&self) -> usize {
        if self.stationary {
            1
        } else {
            self.horizon
        }
    }

    /// Length of a reward or cost table.
    pub fn table_len(&self) -> usize {
        self.layers() * self.num_states * self.num_actions
    }
}

impl TerMdpSpec {
    /// Builds and validates a spec. `window` defaults to the horizon when `None`,
    /// and the norm bound defaults to the L2 norm of the cost table.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        shape: SpecShape,
        transitions: Vec<f64>,
        rewards: Vec<f64>,
        costs: Vec<f64>,
        bias: f64,
        window: Option<usize>,
        norm_bound: Option<f64>,
    ) -> Result<Self> {
        let norm = costs.iter().map(|c| c * c).sum::<f64>().sqrt();
        let spec = TerMdpSpec {
            num_states: shape.num_states,
            num_actions: shape.num_actions,
            horizon: shape.horizon,
            stationary: shape.stationary,
            transitions,
            rewards,
            costs,
            bias,
            window: window.unwrap_or(shape.horizon),
            norm_bound: norm_bound.unwrap_or(norm),
            reward_noise: RewardNoise::Deterministic,
            initial_state: 0,
            cost_grid: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_reward_noise(mut self, noise: RewardNoise) -> Self {
        self.reward_noise = noise;
        self
    }

    pub fn with_initial_state(mut self, state: usize) -> Result<Self> {
        self.initial_state = state;
        self.validate()?;
        Ok(self)
    }

    /// Declares the lattice the costs live on; validated.
    pub fn with_cost_grid(mut self, grid: Option<f64>) -> Result<Self> {
        self.cost_grid = grid;
        self.validate()?;
        Ok(self)
    }

    /// Replaces the cost table (keeps the declared norm bound unless it is violated).
    pub fn with_costs(&self, costs: Vec<f64>) -> Result<Self> {
        let mut out = self.clone();
        out.costs = costs;
        out.cost_grid = None;
        let norm = out.cost_norm();
        if norm > out.norm_bound {
            out.norm_bound = norm;
        }
        out.validate()?;
        Ok(out)
    }

    pub fn with_rewards(&self, rewards: Vec<f64>) -> Result<Self> {
        let mut out = self.clone();
        out.rewards = rewards;
        out.validate()?;
        Ok(out)
    }

    pub fn with_bias(&self, bias: f64) -> Result<Self> {
        let mut out = self.clone();
        out.bias = bias;
        out.validate()?;
        Ok(out)
    }

    pub fn with_window(&self, window: usize) -> Result<Self> {
        let mut out = self.clone();
        out.window = window;
        out.validate()?;
        Ok(out)
    }

    /// Same dynamics with rewards allowed outside `[0, 1]`, as used by optimistic models.
    pub(crate) fn optimistic_variant(&self, rewards: Vec<f64>, costs: Vec<f64>) -> Self {
        let mut out = self.clone();
        out.rewards = rewards;
        out.costs = costs;
        out.cost_grid = None;
        out
    }

    pub(crate) fn with_transitions_unchecked(mut self, transitions: Vec<f64>) -> Self {
        self.transitions = transitions;
        self
    }

    pub(crate) fn with_bias_unchecked(mut self, bias: f64) -> Self {
        self.bias = bias;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let shape = self.shape();
        if self.num_states == 0 || self.num_actions == 0 || self.horizon == 0 {
            return Err(TermdpError::invalid("S, A and H must be positive"));
        }
        let n = shape.table_len();
        if self.rewards.len() != n || self.costs.len() != n {
            return Err(TermdpError::invalid(format!(
                "reward/cost tables must have {n} entries (got {} and {})",
                self.rewards.len(),
                self.costs.len()
            )));
        }
        if self.transitions.len() != n * self.num_states {
            return Err(TermdpError::invalid(format!(
                "transition table must have {} entries, got {}",
                n * self.num_states,
                self.transitions.len()
            )));
        }
        for (row_idx, row) in self.transitions.chunks(self.num_states).enumerate() {
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(TermdpError::invalid(format!("transition row {row_idx} has a negative or non-finite entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_TOLERANCE {
                return Err(TermdpError::invalid(format!(
                    "transition row {row_idx} sums to {sum}, not 1"
                )));
            }
        }
        if self.rewards.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(TermdpError::invalid("mean rewards must lie in [0, 1]"));
        }
        if self.costs.iter().any(|c| !c.is_finite()) || !self.bias.is_finite() {
            return Err(TermdpError::invalid("costs and bias must be finite"));
        }
        if self.window == 0 || self.window > self.horizon {
            return Err(TermdpError::invalid(format!(
                "window must lie in 1..={}, got {}",
                self.horizon, self.window
            )));
        }
        if !(self.norm_bound.is_finite() && self.norm_bound >= 0.0) {
            return Err(TermdpError::invalid("norm bound must be finite and non-negative"));
        }
        let norm = self.cost_norm();
        if norm > self.norm_bound * (1.0 + 1e-12) + 1e-12 {
            return Err(TermdpError::invalid(format!(
                "cost norm {norm} exceeds declared bound {}",
                self.norm_bound
            )));
        }
        if self.initial_state >= self.num_states {
            return Err(TermdpError::invalid("initial state out of range"));
        }
        if let Some(grid) = self.cost_grid {
            if !(grid.is_finite() && grid > 0.0) {
                return Err(TermdpError::invalid("cost grid must be positive"));
            }
            if grid_indices(&self.costs, grid).is_none() {
                return Err(TermdpError::invalid(format!(
                    "costs are not multiples of the declared grid {grid}"
                )));
            }
        }
        Ok(())
    }

    pub fn shape(&self) -> SpecShape {
        SpecShape::new(self.num_states, self.num_actions, self.horizon, self.stationary)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn stationary(&self) -> bool {
        self.stationary
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn norm_bound(&self) -> f64 {
        self.norm_bound
    }

    pub fn reward_noise(&self) -> RewardNoise {
        self.reward_noise
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    pub fn cost_grid(&self) -> Option<f64> {
        self.cost_grid
    }

    /// Index into reward/cost tables for step `h` (zero based).
    #[inline]
    pub fn index(&self, h: usize, s: usize, a: usize) -> usize {
        let layer = if self.stationary { 0 } else { h };
        (layer * self.num_states + s) * self.num_actions + a
    }

    #[inline]
    pub fn reward(&self, h: usize, s: usize, a: usize) -> f64 {
        self.rewards[self.index(h, s, a)]
    }

    #[inline]
    pub fn cost(&self, h: usize, s: usize, a: usize) -> f64 {
        self.costs[self.index(h, s, a)]
    }

    #[inline]
    pub fn transition_row(&self, h: usize, s: usize, a: usize) -> &[f64] {
        let start = self.index(h, s, a) * self.num_states;
        &self.transitions[start..start + self.num_states]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn transitions(&self) -> &[f64] {
        &self.transitions
    }

    pub fn cost_norm(&self) -> f64 {
        self.costs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn max_abs_cost(&self) -> f64 {
        self.costs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn check_state_action(&self, s: usize, a: usize) -> Result<()> {
        if s >= self.num_states {
            return Err(TermdpError::invalid(format!("state {s} out of range 0..{}", self.num_states)));
        }
        if a >= self.num_actions {
            return Err(TermdpError::invalid(format!("action {a} out of range 0..{}", self.num_actions)));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Integer multiples of `grid` for every value, or `None` if any value is off-grid.
pub fn grid_indices(values: &[f64], grid: f64) -> Option<Vec<i64>> {
    values
        .iter()
        .map(|v| {
            let q = v / grid;
            let r = q.round();
            if (q - r).abs() <= 1e-7 {
                Some(r as i64)
            } else {
                None
            }
        })
        .collect()
}

/// On-disk JSON layout: tables are nested `[layer][s][a]` (and `[s']` for transitions).
#[derive(Debug, Clone, Serialize, Deserialize)]
struct SpecFile {
    #[serde(rename = "S")]
    s: usize,
    #[serde(rename = "A")]
    a: usize,
    #[serde(rename = "H")]
    h: usize,
    stationary: bool,
    transitions: Vec<Vec<Vec<Vec<f64>>>>,
    rewards: Vec<Vec<Vec<f64>>>,
    costs: Vec<Vec<Vec<f64>>>,
    bias: f64,
    window: Option<usize>,
    #[serde(rename = "norm_bound_L")]
    norm_bound: Option<f64>,
    #[serde(default)]
    reward_noise: RewardNoise,
    #[serde(default)]
    initial_state: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cost_grid: Option<f64>,
}

fn flatten3(t: Vec<Vec<Vec<f64>>>) -> Vec<f64> {
    t.into_iter().flatten().flatten().collect()
}

impl TryFrom<SpecFile> for TerMdpSpec {
    type Error = TermdpError;

    fn try_from(f: SpecFile) -> Result<Self> {
        let shape = SpecShape::new(f.s, f.a, f.h, f.stationary);
        let layers = shape.layers();
        let shaped3 = |t: &Vec<Vec<Vec<f64>>>| {
            t.len() == layers && t.iter().all(|l| l.len() == f.s && l.iter().all(|r| r.len() == f.a))
        };
        if !shaped3(&f.rewards) || !shaped3(&f.costs) {
            return Err(TermdpError::invalid(format!(
                "rewards/costs must be nested [{layers}][{}][{}]",
                f.s, f.a
            )));
        }
        let transitions_ok = f.transitions.len() == layers
            && f.transitions.iter().all(|l| {
                l.len() == f.s && l.iter().all(|r| r.len() == f.a && r.iter().all(|p| p.len() == f.s))
            });
        if !transitions_ok {
            return Err(TermdpError::invalid(format!(
                "transitions must be nested [{layers}][{}][{}][{}]",
                f.s, f.a, f.s
            )));
        }
        let transitions: Vec<f64> = f.transitions.into_iter().flatten().flatten().flatten().collect();
        let spec = TerMdpSpec::new(
            shape,
            transitions,
            flatten3(f.rewards),
            flatten3(f.costs),
            f.bias,
            f.window,
            f.norm_bound,
        )?
        .with_reward_noise(f.reward_noise)
        .with_initial_state(f.initial_state)?
        .with_cost_grid(f.cost_grid)?;
        Ok(spec)
    }
}

impl From<TerMdpSpec> for SpecFile {
    fn from(spec: TerMdpSpec) -> Self {
        let (s, a) = (spec.num_states, spec.num_actions);
        let nest3 = |v: &[f64]| -> Vec<Vec<Vec<f64>>> {
            v.chunks(s * a)
                .map(|layer| layer.chunks(a).map(|row| row.to_vec()).collect())
                .collect()
        };
        let transitions = spec
            .transitions
            .chunks(s * a * s)
            .map(|layer| {
                layer
                    .chunks(a * s)
                    .map(|state| state.chunks(s).map(|row| row.to_vec()).collect())
                    .collect()
            })
            .collect();
        SpecFile {
            s,
            a,
            h: spec.horizon,
            stationary: spec.stationary,
            transitions,
            rewards: nest3(&spec.rewards),
            costs: nest3(&spec.costs),
            bias: spec.bias,
            window: Some(spec.window),
            norm_bound: Some(spec.norm_bound),
            reward_noise: spec.reward_noise,
            initial_state: spec.initial_state,
            cost_grid: spec.cost_grid,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state(stationary: bool) -> TerMdpSpec {
        let shape = SpecShape::new(2, 2, 3, stationary);
        let n = shape.table_len();
        let transitions = (0..n).flat_map(|_| [0.25, 0.75]).collect();
        TerMdpSpec::new(shape, transitions, vec![0.5; n], vec![0.2; n], 1.0, None, None).unwrap()
    }

    #[test]
    fn json_round_trip_keeps_every_field() {
        for stationary in [false, true] {
            let spec = two_state(stationary)
                .with_reward_noise(RewardNoise::Bernoulli)
                .with_cost_grid(Some(0.1))
                .unwrap();
            let text = spec.to_json().unwrap();
            for key in ["\"S\"", "\"A\"", "\"H\"", "\"norm_bound_L\"", "\"reward_noise\"", "\"window\""] {
                assert!(text.contains(key), "missing {key}");
            }
            assert_eq!(TerMdpSpec::from_json(&text).unwrap(), spec);
        }
    }

    #[test]
    fn validation_rejects_bad_tables() {
        let spec = two_state(false);
        let shape = spec.shape();
        let n = shape.table_len();
        let mut bad = spec.transitions().to_vec();
        bad[0] = 0.3;
        assert!(TerMdpSpec::new(shape, bad, vec![0.5; n], vec![0.0; n], 0.0, None, None).is_err());
        assert!(spec.with_rewards(vec![1.5; n]).is_err());
        assert!(spec.with_window(0).is_err());
        assert!(spec.with_window(4).is_err());
        let tight = TerMdpSpec::new(shape, spec.transitions().to_vec(), vec![0.5; n], vec![1.0; n], 0.0, None, Some(1.0));
        assert!(tight.is_err());
        assert!(spec.clone().with_cost_grid(Some(0.3)).is_err());
    }

    #[test]
    fn stationary_tables_ignore_step() {
        let spec = two_state(true);
        assert_eq!(spec.index(0, 1, 1), spec.index(2, 1, 1));
        let spec = two_state(false);
        assert_ne!(spec.index(0, 1, 1), spec.index(2, 1, 1));
    }

    #[test]
    fn grid_detection() {
        assert_eq!(grid_indices(&[0.3, -0.1, 0.0], 0.1), Some(vec![3, -1, 0]));
        assert_eq!(grid_indices(&[0.37], 0.1), None);
    }
}
