//! Empirical model, count-based bonuses and the optimistic model built from them.

use serde::Serialize;

use crate::error::{Result, TermdpError};
use crate::estimator::{ConfidenceRadii, CostEstimate};
use crate::model::{SpecShape, TerMdpSpec, Trajectory};

/// Visit counts, reward sums and observed transitions per `(h, s, a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalModel {
    shape: SpecShape,
    visits: Vec<u64>,
    reward_sums: Vec<f64>,
    transition_counts: Vec<u64>,
    transition_totals: Vec<u64>,
    episodes: usize,
}

impl EmpiricalModel {
    pub fn new(shape: SpecShape) -> Self {
        let n = shape.table_len();
        EmpiricalModel {
            shape,
            visits: vec![0; n],
            reward_sums: vec![0.0; n],
            transition_counts: vec![0; n * shape.num_states],
            transition_totals: vec![0; n],
            episodes: 0,
        }
    }

    fn index(&self, h: usize, s: usize, a: usize) -> usize {
        let layer = if self.shape.stationary { 0 } else { h };
        (layer * self.shape.num_states + s) * self.shape.num_actions + a
    }

    /// Folds in one episode. Transitions are only seen on survival.
    pub fn update(&mut self, traj: &Trajectory) -> Result<()> {
        if traj.len() > self.shape.horizon {
            return Err(TermdpError::invalid("trajectory longer than the horizon"));
        }
        for t in 0..traj.len() {
            let (s, a) = (traj.states[t], traj.actions[t]);
            if s >= self.shape.num_states || a >= self.shape.num_actions {
                return Err(TermdpError::invalid("trajectory state/action out of range"));
            }
            let i = self.index(t, s, a);
            self.visits[i] += 1;
            self.reward_sums[i] += traj.rewards[t];
            if let Some(&next) = traj.states.get(t + 1) {
                self.transition_counts[i * self.shape.num_states + next] += 1;
                self.transition_totals[i] += 1;
            }
        }
        self.episodes += 1;
        Ok(())
    }

    pub fn shape(&self) -> SpecShape {
        self.shape
    }

    pub fn episodes(&self) -> usize {
        self.episodes
    }

    pub fn visits(&self) -> &[u64] {
        &self.visits
    }

    /// `r̂`, zero where unvisited.
    pub fn mean_rewards(&self) -> Vec<f64> {
        self.reward_sums
            .iter()
            .zip(&self.visits)
            .map(|(&r, &n)| if n == 0 { 0.0 } else { r / n as f64 })
            .collect()
    }

    /// `P̂`, uniform on rows without observed transitions.
    pub fn transitions(&self) -> Vec<f64> {
        let s_n = self.shape.num_states;
        let mut out = Vec::with_capacity(self.transition_counts.len());
        for (i, &total) in self.transition_totals.iter().enumerate() {
            let row = &self.transition_counts[i * s_n..(i + 1) * s_n];
            if total == 0 {
                out.extend(std::iter::repeat_n(1.0 / s_n as f64, s_n));
            } else {
                out.extend(row.iter().map(|&c| c as f64 / total as f64));
            }
        }
        out
    }
}

/// The three optimism bonuses per `(h, s, a)`, already multiplied by `scale`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BonusSet {
    pub reward: Vec<f64>,
    pub transition: Vec<f64>,
    pub cost: Vec<f64>,
    pub delta: f64,
    pub scale: f64,
}

impl BonusSet {
    /// `b_r = √(2 log(8SAHK/δ)/(n∨1))`, `b_p = H √(4S log(12SAHK/δ)/(n∨1))`, `b_c` the radii.
    pub fn new(
        shape: SpecShape,
        visits: &[u64],
        radii: &ConfidenceRadii,
        episodes: usize,
        delta: f64,
        scale: f64,
    ) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) || !(scale >= 0.0 && scale.is_finite()) {
            return Err(TermdpError::invalid("need delta in (0, 1) and a non-negative scale"));
        }
        if visits.len() != radii.radius.len() {
            return Err(TermdpError::invalid("visit counts and radii disagree in length"));
        }
        let (s, a, h) = (shape.num_states as f64, shape.num_actions as f64, shape.horizon as f64);
        let k = episodes.max(1) as f64;
        let log_r = (8.0 * s * a * h * k / delta).ln();
        let log_p = (12.0 * s * a * h * k / delta).ln();
        let reward = visits
            .iter()
            .map(|&n| scale * (2.0 * log_r / n.max(1) as f64).sqrt())
            .collect();
        let transition = visits
            .iter()
            .map(|&n| scale * h * (4.0 * s * log_p / n.max(1) as f64).sqrt())
            .collect();
        Ok(BonusSet {
            reward,
            transition,
            cost: radii.radius.clone(),
            delta,
            scale,
        })
    }

    /// All bonuses zero.
    pub fn zero(len: usize) -> Self {
        BonusSet {
            reward: vec![0.0; len],
            transition: vec![0.0; len],
            cost: vec![0.0; len],
            delta: 0.5,
            scale: 0.0,
        }
    }
}

/// `r̄ = r̂ + b_r + b_p` (floored at 0), `c̄ = ĉ - b_c` (floored at `-L`, which no true
/// cost can undercut since `|c_i| ≤ ‖c‖₂ ≤ L`), transitions `P̂`. Structure
/// (shape, bias, window, initial state) comes from `template`.
pub fn optimistic_model(
    template: &TerMdpSpec,
    empirical: &EmpiricalModel,
    estimate: &CostEstimate,
    bonuses: &BonusSet,
) -> Result<TerMdpSpec> {
    let n = template.shape().table_len();
    if empirical.shape() != template.shape() || estimate.c_hat.len() != n || bonuses.cost.len() != n {
        return Err(TermdpError::invalid("optimistic model inputs have inconsistent shapes"));
    }
    let rewards = empirical
        .mean_rewards()
        .iter()
        .enumerate()
        .map(|(i, r)| (r + bonuses.reward[i] + bonuses.transition[i]).max(0.0))
        .collect();
    let floor = -template.norm_bound();
    let costs = estimate
        .c_hat
        .iter()
        .zip(&bonuses.cost)
        .map(|(c, b)| (c - b).max(floor))
        .collect();
    let bias = estimate.bias_or(template.bias());
    Ok(template
        .optimistic_variant(rewards, costs)
        .with_transitions_unchecked(empirical.transitions())
        .with_bias_unchecked(bias))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{confidence_radius, CoordinateMap, RadiusMode, RadiusParams};

    fn template() -> TerMdpSpec {
        let shape = SpecShape::new(2, 2, 3, false);
        let n = shape.table_len();
        let p = (0..n).flat_map(|i| if i % 2 == 0 { [1.0, 0.0] } else { [0.3, 0.7] }).collect();
        TerMdpSpec::new(shape, p, vec![0.4; n], vec![0.5; n], 1.0, None, None).unwrap()
    }

    fn radii(visits: &[u64]) -> ConfidenceRadii {
        let params = RadiusParams {
            kappa: 4.0,
            num_states: 2,
            num_actions: 2,
            horizon: 3,
            norm_bound: 2.0,
            delta: 0.1,
            episode: 1,
            scale: 0.1,
            mode: RadiusMode::Practical,
        };
        confidence_radius(visits, CoordinateMap::new(2, 2, 3, false), params).unwrap()
    }

    #[test]
    fn zero_bonus_true_estimate_is_true_model() {
        let spec = template();
        let mut emp = EmpiricalModel::new(spec.shape());
        // feed exact means and transitions by hand: deterministic rewards, chosen paths
        let traj = Trajectory {
            states: vec![0, 0, 0],
            actions: vec![0, 0, 0],
            rewards: vec![0.4; 3],
            termination_time: None,
            accumulated_costs: vec![0.5, 1.0, 1.5],
        };
        emp.update(&traj).unwrap();
        let est = CostEstimate {
            coords: CoordinateMap::new(2, 2, 3, false),
            c_hat: spec.costs().to_vec(),
            bias_hat: None,
            counts: vec![0; 12],
            lambda: 1.0,
            objective_value: 0.0,
            iterations: 0,
            gradient_norm: 0.0,
            projection_active: false,
        };
        let opt = optimistic_model(&spec, &emp, &est, &BonusSet::zero(12)).unwrap();
        assert_eq!(opt.costs(), spec.costs());
        assert_eq!(opt.reward(0, 0, 0), 0.4);
        assert_eq!(opt.transition_row(0, 0, 0), &[1.0, 0.0]);
        // unvisited rows fall back to uniform
        assert_eq!(opt.transition_row(0, 1, 1), &[0.5, 0.5]);
    }

    #[test]
    fn unvisited_is_most_optimistic() {
        let visits = vec![0, 10, 100, 1000, 0, 0, 0, 0, 0, 0, 0, 0];
        let r = radii(&visits);
        let b = BonusSet::new(SpecShape::new(2, 2, 3, false), &visits, &r, 5, 0.1, 0.1).unwrap();
        for i in 0..3 {
            assert!(b.reward[i] > b.reward[i + 1] || visits[i] <= 1);
            assert!(b.cost[i] > b.cost[i + 1]);
        }
        // n = 0 and n = 1 share the reward bonus through n ∨ 1
        let b1 = BonusSet::new(SpecShape::new(2, 2, 3, false), &[1; 12], &radii(&[1; 12]), 5, 0.1, 0.1).unwrap();
        assert_eq!(b.reward[0], b1.reward[0]);
    }
}
