//! Bootstrap ensemble of cost estimates and the optimistic window cost built from it.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::windows::{split_windows, ReplayBuffer, WindowExample};
use crate::error::{Result, TermdpError};
use crate::estimator::{fit_mle, BiasMode, CoordinateMap, CostEstimate, FitOptions, TerminationDataset, VisitVector};
use crate::model::{sigmoid, SimRng};

/// How ensemble members are combined into the cost the agent plans with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Aggregation {
    /// Per-step minimum over members.
    Min,
    Mean,
    /// Mean minus `alpha` member standard deviations.
    MeanMinusStd(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostEnsemble {
    pub num_states: usize,
    pub num_actions: usize,
    pub members: Vec<CostEstimate>,
}

impl CostEnsemble {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Per `(s, a)` cost combined across members.
    pub fn aggregate_costs(&self, how: Aggregation) -> Vec<f64> {
        let dim = self.num_states * self.num_actions;
        let m = self.members.len() as f64;
        (0..dim)
            .map(|i| {
                let vals = self.members.iter().map(|e| e.c_hat[i]);
                match how {
                    Aggregation::Min => vals.fold(f64::INFINITY, f64::min),
                    Aggregation::Mean => vals.sum::<f64>() / m,
                    Aggregation::MeanMinusStd(alpha) => {
                        let mean = self.members.iter().map(|e| e.c_hat[i]).sum::<f64>() / m;
                        let var = vals.map(|v| (v - mean).powi(2)).sum::<f64>() / m;
                        mean - alpha * var.sqrt()
                    }
                }
            })
            .collect()
    }

    /// Bias paired with an aggregation: the largest member bias for `Min` (the least
    /// termination-prone member), the mean otherwise.
    pub fn aggregate_bias(&self, how: Aggregation) -> f64 {
        let biases = self.members.iter().map(|e| e.bias_or(0.0));
        match how {
            Aggregation::Min => biases.fold(f64::NEG_INFINITY, f64::max),
            _ => biases.sum::<f64>() / self.members.len() as f64,
        }
    }

    /// Mean member cost table.
    pub fn mean_costs(&self) -> Vec<f64> {
        self.aggregate_costs(Aggregation::Mean)
    }
}

/// Window sum of the per-step minimum over members.
pub fn optimistic_cost(window: &[(usize, usize)], ensemble: &CostEnsemble) -> f64 {
    window
        .iter()
        .map(|&(s, a)| {
            let i = s * ensemble.num_actions + a;
            ensemble.members.iter().map(|e| e.c_hat[i]).fold(f64::INFINITY, f64::min)
        })
        .sum()
}

/// Probability of surviving the termination check at window cost `c`: `1 − ρ(c − b)`.
pub fn dynamic_discount(c: f64, bias: f64) -> f64 {
    sigmoid(bias - c)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleOptions {
    pub members: usize,
    pub window: usize,
    pub lambda: f64,
    pub norm_bound: f64,
}

fn to_visits(ex: &WindowExample, num_actions: usize) -> VisitVector {
    VisitVector::from_coords(ex.steps.iter().map(|&(s, a)| s * num_actions + a))
}

/// Fits each member on a bootstrap resample of whole trajectories from the buffer.
/// A previous ensemble of the same size warm-starts the member with the same index.
pub fn train_ensemble(
    buffer: &ReplayBuffer,
    num_states: usize,
    num_actions: usize,
    options: &EnsembleOptions,
    warm: Option<&CostEnsemble>,
    rng: &mut SimRng,
) -> Result<CostEnsemble> {
    if options.members == 0 {
        return Err(TermdpError::invalid("ensemble needs at least one member"));
    }
    let coords = CoordinateMap::new(num_states, num_actions, 1, true);
    // intern window vectors once; members only differ in how often each trajectory is drawn
    let mut ids: HashMap<VisitVector, usize> = HashMap::new();
    let mut unique: Vec<VisitVector> = Vec::new();
    let mut split: Vec<Vec<(usize, u8, usize)>> = Vec::with_capacity(buffer.len());
    for traj in buffer.iter() {
        let mut rows = Vec::with_capacity(traj.len());
        for e in split_windows(traj, options.window)? {
            let (s, a) = *e.steps.last().expect("window examples are non-empty");
            let v = to_visits(&e, num_actions);
            let id = *ids.entry(v).or_insert_with_key(|v| {
                unique.push(v.clone());
                unique.len() - 1
            });
            rows.push((id, e.label, s * num_actions + a));
        }
        split.push(rows);
    }
    let n = split.len();
    let mut members = Vec::with_capacity(options.members);
    for m in 0..options.members {
        let mut data = TerminationDataset::new(coords, options.window)?;
        let mut tally = vec![(0.0f64, 0.0f64); unique.len()];
        for _ in 0..n {
            for &(id, label, c) in &split[rng.random_range(0..n)] {
                data.add_count(c);
                if label == 1 {
                    tally[id].0 += 1.0;
                } else {
                    tally[id].1 += 1.0;
                }
            }
        }
        for (v, (pos, neg)) in unique.iter().zip(tally) {
            if pos + neg > 0.0 {
                data.push_weighted(v.clone(), pos, neg);
            }
        }
        let mut fit = FitOptions::new(options.lambda, options.norm_bound, BiasMode::Estimate);
        if let Some(prev) = warm.and_then(|w| w.members.get(m)) {
            fit = fit.with_warm_start(prev);
        }
        let est = fit_mle(&data, &fit).map_err(|e| e.with_context(format!("ensemble member {m}")))?;
        members.push(est);
    }
    Ok(CostEnsemble {
        num_states,
        num_actions,
        members,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{seeded_rng, Trajectory};

    fn member(c: Vec<f64>, b: f64) -> CostEstimate {
        CostEstimate {
            coords: CoordinateMap::new(1, c.len(), 1, true),
            counts: vec![0; c.len()],
            c_hat: c,
            bias_hat: Some(b),
            lambda: 1.0,
            objective_value: 0.0,
            iterations: 0,
            gradient_norm: 0.0,
            projection_active: false,
        }
    }

    fn ensemble() -> CostEnsemble {
        CostEnsemble {
            num_states: 1,
            num_actions: 3,
            members: vec![member(vec![1.0, 0.0, 2.0], 1.0), member(vec![0.5, 1.0, 2.0], 3.0)],
        }
    }

    #[test]
    fn optimistic_cost_takes_stepwise_minimum() {
        let e = ensemble();
        assert!((optimistic_cost(&[(0, 0), (0, 1), (0, 2), (0, 0)], &e) - 3.0).abs() < 1e-12);
        assert_eq!(optimistic_cost(&[], &e), 0.0);
        assert_eq!(e.aggregate_costs(Aggregation::Mean), vec![0.75, 0.5, 2.0]);
        let s = e.aggregate_costs(Aggregation::MeanMinusStd(1.0));
        assert!((s[0] - 0.5).abs() < 1e-12 && (s[2] - 2.0).abs() < 1e-12);
        assert_eq!(e.aggregate_bias(Aggregation::Min), 3.0);
        assert_eq!(e.aggregate_bias(Aggregation::Mean), 2.0);
    }

    #[test]
    fn discount_is_survival_probability() {
        assert!((dynamic_discount(2.0, 2.0) - 0.5).abs() < 1e-15);
        assert!(dynamic_discount(10.0, 0.0) < 1e-4);
        assert!(dynamic_discount(0.0, 1.0) > dynamic_discount(1.0, 1.0));
    }

    #[test]
    fn ensemble_is_seeded_and_warm_startable() {
        let mut buf = ReplayBuffer::new(10).unwrap();
        for i in 0..8 {
            let term = i % 3 == 0;
            let len = if term { 2 } else { 4 };
            buf.push(Trajectory {
                states: vec![0; len],
                actions: (0..len).map(|t| (t + i) % 2).collect(),
                rewards: vec![0.0; len],
                termination_time: term.then_some(len),
                accumulated_costs: vec![0.0; len],
            });
        }
        let opts = EnsembleOptions {
            members: 3,
            window: 2,
            lambda: 1.0,
            norm_bound: 10.0,
        };
        let a = train_ensemble(&buf, 1, 2, &opts, None, &mut seeded_rng(4, 0)).unwrap();
        let b = train_ensemble(&buf, 1, 2, &opts, None, &mut seeded_rng(4, 0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
        let c = train_ensemble(&buf, 1, 2, &opts, Some(&a), &mut seeded_rng(4, 0)).unwrap();
        for (x, y) in a.members.iter().zip(&c.members) {
            for (u, v) in x.c_hat.iter().zip(&y.c_hat) {
                assert!((u - v).abs() < 1e-6);
            }
        }
    }
}
