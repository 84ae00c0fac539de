//! Brute-force enumeration of every trajectory outcome, including each step's
//! termination branch. Works on raw float costs and full histories, sharing no code
//! with the planner, so the two can check each other.

use serde::Serialize;

use crate::error::{Result, TermdpError};
use crate::model::{MarkovPolicy, TerMdpSpec, UniformPolicy};
use crate::planner::CostAwarePolicy;

/// Enumeration stops with an error past this many leaves.
pub const MAX_LEAVES: u64 = 1_000_000;

/// A policy that may look at the full history: previous `(state, action)` pairs.
pub trait HistoryPolicy {
    fn distribution(&self, history: &[(usize, usize)], state: usize, out: &mut Vec<(usize, f64)>);
}

impl HistoryPolicy for UniformPolicy {
    fn distribution(&self, _: &[(usize, usize)], _: usize, out: &mut Vec<(usize, f64)>) {
        let p = 1.0 / self.num_actions as f64;
        out.extend((0..self.num_actions).map(|a| (a, p)));
    }
}

impl HistoryPolicy for MarkovPolicy {
    fn distribution(&self, history: &[(usize, usize)], state: usize, out: &mut Vec<(usize, f64)>) {
        out.push((self.actions[history.len() * self.num_states + state], 1.0));
    }
}

/// Replays a memory-based policy along the history.
pub struct Replay<P>(pub P);

impl<P: CostAwarePolicy> HistoryPolicy for Replay<P> {
    fn distribution(&self, history: &[(usize, usize)], state: usize, out: &mut Vec<(usize, f64)>) {
        let mut memory = self.0.initial_memory();
        for (h, &(s, a)) in history.iter().enumerate() {
            memory = self.0.advance(h, s, a, &memory);
        }
        self.0.distribution(history.len(), state, &memory, out);
    }
}

/// Outcome of one enumerated trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Outcome {
    pub steps: Vec<(usize, usize)>,
    pub terminated: bool,
    pub probability: f64,
    pub total_reward: f64,
}

/// Every `(trajectory, probability, return)` triple of a policy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutcomeTree {
    pub outcomes: Vec<Outcome>,
}

impl OutcomeTree {
    pub fn total_probability(&self) -> f64 {
        self.outcomes.iter().map(|o| o.probability).sum()
    }

    pub fn value(&self) -> f64 {
        self.outcomes.iter().map(|o| o.probability * o.total_reward).sum()
    }
}

fn window_sum(spec: &TerMdpSpec, history: &[(usize, usize)]) -> f64 {
    let start = history.len().saturating_sub(spec.window());
    history[start..]
        .iter()
        .enumerate()
        .map(|(i, &(s, a))| spec.cost(start + i, s, a))
        .sum()
}

fn terminate_prob(spec: &TerMdpSpec, history: &[(usize, usize)]) -> f64 {
    1.0 / (1.0 + (spec.bias() - window_sum(spec, history)).exp())
}

struct Counter(u64);

impl Counter {
    fn leaf(&mut self) -> Result<()> {
        self.0 += 1;
        if self.0 > MAX_LEAVES {
            return Err(TermdpError::InstanceTooLarge {
                leaves: self.0,
                cap: MAX_LEAVES,
            });
        }
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
fn enumerate<P: HistoryPolicy + ?Sized>(
    spec: &TerMdpSpec,
    policy: &P,
    history: &mut Vec<(usize, usize)>,
    state: usize,
    prob: f64,
    reward: f64,
    counter: &mut Counter,
    out: &mut Vec<Outcome>,
) -> Result<()> {
    let h = history.len();
    let mut dist = Vec::new();
    policy.distribution(history, state, &mut dist);
    for (a, pa) in dist {
        if a >= spec.num_actions() {
            return Err(TermdpError::invalid(format!("policy chose action {a}")));
        }
        if pa == 0.0 {
            continue;
        }
        let r = reward + spec.reward(h, state, a);
        history.push((state, a));
        if h + 1 == spec.horizon() {
            counter.leaf()?;
            out.push(Outcome {
                steps: history.clone(),
                terminated: false,
                probability: prob * pa,
                total_reward: r,
            });
        } else {
            let rho = terminate_prob(spec, history);
            counter.leaf()?;
            out.push(Outcome {
                steps: history.clone(),
                terminated: true,
                probability: prob * pa * rho,
                total_reward: r,
            });
            for (s2, &p) in spec.transition_row(h, state, a).iter().enumerate() {
                if p > 0.0 {
                    enumerate(spec, policy, history, s2, prob * pa * (1.0 - rho) * p, r, counter, out)?;
                }
            }
        }
        history.pop();
    }
    Ok(())
}

pub fn outcome_tree<P: HistoryPolicy + ?Sized>(spec: &TerMdpSpec, policy: &P) -> Result<OutcomeTree> {
    let mut outcomes = Vec::new();
    enumerate(
        spec,
        policy,
        &mut Vec::new(),
        spec.initial_state(),
        1.0,
        0.0,
        &mut Counter(0),
        &mut outcomes,
    )?;
    Ok(OutcomeTree { outcomes })
}

/// Exact `V^π_1` by summing over every outcome.
pub fn brute_force_value<P: HistoryPolicy + ?Sized>(spec: &TerMdpSpec, policy: &P) -> Result<f64> {
    Ok(outcome_tree(spec, policy)?.value())
}

/// Optimal deterministic history-dependent decision at one history node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyNode {
    pub step: usize,
    pub state: usize,
    /// Window sum of costs before this step.
    pub accumulated_cost: f64,
    pub action: usize,
    pub value: f64,
    /// Subtrees by next state, for the chosen action only.
    pub children: Vec<(usize, PolicyNode)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimalPolicy {
    pub value: f64,
    pub root: PolicyNode,
}

impl OptimalPolicy {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Every node paired with the history leading to it.
    pub fn nodes(&self) -> Vec<(Vec<(usize, usize)>, &PolicyNode)> {
        let mut out = Vec::new();
        let mut stack = vec![(Vec::new(), &self.root)];
        while let Some((history, node)) = stack.pop() {
            for (_, child) in node.children.iter().rev() {
                let mut h2: Vec<(usize, usize)> = history.clone();
                h2.push((node.state, node.action));
                stack.push((h2, child));
            }
            out.push((history, node));
        }
        out
    }
}

impl HistoryPolicy for OptimalPolicy {
    fn distribution(&self, history: &[(usize, usize)], state: usize, out: &mut Vec<(usize, f64)>) {
        let mut node = &self.root;
        for (i, &(_, a)) in history.iter().enumerate() {
            let next_state = history.get(i + 1).map_or(state, |&(s, _)| s);
            match node.children.iter().find(|(s, _)| *s == next_state) {
                Some((_, child)) if node.action == a => node = child,
                _ => {
                    // history leaves the optimal tree; any action will do
                    out.push((0, 1.0));
                    return;
                }
            }
        }
        out.push((node.action, 1.0));
    }
}

fn optimize(
    spec: &TerMdpSpec,
    history: &mut Vec<(usize, usize)>,
    state: usize,
    counter: &mut Counter,
) -> Result<PolicyNode> {
    let h = history.len();
    let accumulated_cost = if h == 0 {
        0.0
    } else {
        // costs the terminator will still see after the next step
        let keep = spec.window().saturating_sub(1);
        let start = h.saturating_sub(keep);
        history[start..]
            .iter()
            .enumerate()
            .map(|(i, &(s, a))| spec.cost(start + i, s, a))
            .sum()
    };
    let mut best: Option<PolicyNode> = None;
    for a in 0..spec.num_actions() {
        history.push((state, a));
        let mut value = spec.reward(h, state, a);
        let mut children = Vec::new();
        if h + 1 == spec.horizon() {
            counter.leaf()?;
        } else {
            let survive = 1.0 - terminate_prob(spec, history);
            counter.leaf()?;
            let mut ev = 0.0;
            for (s2, &p) in spec.transition_row(h, state, a).iter().enumerate() {
                if p > 0.0 {
                    let child = optimize(spec, history, s2, counter)?;
                    ev += p * child.value;
                    children.push((s2, child));
                }
            }
            value += survive * ev;
        }
        history.pop();
        if best.as_ref().is_none_or(|b| value > b.value) {
            best = Some(PolicyNode {
                step: h,
                state,
                accumulated_cost,
                action: a,
                value,
                children,
            });
        }
    }
    Ok(best.expect("at least one action"))
}

/// `V*` over all deterministic history-dependent policies, with a maximizing policy.
pub fn brute_force_optimal(spec: &TerMdpSpec) -> Result<OptimalPolicy> {
    let root = optimize(spec, &mut Vec::new(), spec.initial_state(), &mut Counter(0))?;
    Ok(OptimalPolicy { value: root.value, root })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SpecShape;

    fn flat(s: usize, a: usize, h: usize, r: f64, c: f64, b: f64) -> TerMdpSpec {
        let shape = SpecShape::new(s, a, h, false);
        let n = shape.table_len();
        let p = (0..n).flat_map(|_| (0..s).map(move |_| 1.0 / s as f64)).collect();
        TerMdpSpec::new(shape, p, vec![r; n], vec![c; n], b, None, None).unwrap()
    }

    #[test]
    fn two_step_half_survival() {
        let spec = flat(1, 1, 2, 1.0, 0.0, 0.0);
        assert!((brute_force_value(&spec, &UniformPolicy { num_actions: 1 }).unwrap() - 1.5).abs() < 1e-15);
        assert!((brute_force_optimal(&spec).unwrap().value - 1.5).abs() < 1e-15);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let spec = flat(3, 2, 4, 0.5, 0.25, 0.3);
        let tree = outcome_tree(&spec, &UniformPolicy { num_actions: 2 }).unwrap();
        assert!((tree.total_probability() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn huge_bias_sums_rewards() {
        let spec = flat(1, 1, 4, 0.25, 0.0, 800.0);
        assert!((brute_force_value(&spec, &UniformPolicy { num_actions: 1 }).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn guard_fails_hard() {
        let spec = flat(4, 3, 8, 0.5, 0.0, 0.0);
        assert!(matches!(brute_force_optimal(&spec), Err(TermdpError::InstanceTooLarge { .. })));
    }

    #[test]
    fn optimal_tree_replays_to_its_value() {
        let shape = SpecShape::new(2, 2, 3, true);
        let spec = TerMdpSpec::new(
            shape,
            vec![0.7, 0.3, 0.2, 0.8, 0.5, 0.5, 1.0, 0.0],
            vec![0.2, 0.9, 0.4, 0.1],
            vec![0.0, 1.0, 0.5, -0.5],
            0.5,
            None,
            None,
        )
        .unwrap();
        let opt = brute_force_optimal(&spec).unwrap();
        let v = brute_force_value(&spec, &opt).unwrap();
        assert!((v - opt.value).abs() < 1e-12);
        assert!(opt.to_json().unwrap().contains("\"children\""));
    }
}
