//! Environment families. Every generated spec carries a cost grid so it can be
//! evaluated exactly.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TermdpError};
use crate::model::{seeded_rng, SpecShape, TerMdpSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CostSign {
    #[default]
    NonNegative,
    Signed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Generator {
    RandomTermdp {
        states: usize,
        actions: usize,
        horizon: usize,
        #[serde(default)]
        stationary: bool,
        /// Costs are multiples of this grid.
        #[serde(default = "default_grid")]
        grid: f64,
        /// Largest absolute cost before rescaling.
        #[serde(default = "default_cost_max")]
        cost_max: f64,
        #[serde(default)]
        sign: CostSign,
        /// Norm bound `L`; costs are shrunk toward zero until `‖c‖₂ ≤ L`.
        #[serde(default)]
        norm_bound: Option<f64>,
        #[serde(default = "default_bias")]
        bias: f64,
        #[serde(default)]
        window: Option<usize>,
        /// Leave some transition entries at zero to keep enumeration cheap.
        #[serde(default)]
        sparse: bool,
    },
    /// A line of states. Action 0 is safe and slow, action 1 pays more but carries cost.
    Chain {
        states: usize,
        horizon: usize,
        #[serde(default = "default_chain_bias")]
        bias: f64,
    },
    /// Cyclic road of `width` lanes and `length` rows. Each step moves one row forward
    /// and shifts lane left, not at all, or right. Coins cost 1 and are invisible to
    /// the agent except through terminations; overtaking cells pay reward.
    GridworldCoins {
        #[serde(default = "default_side")]
        width: usize,
        #[serde(default = "default_side")]
        length: usize,
        #[serde(default = "default_grid_horizon")]
        horizon: usize,
        #[serde(default = "default_grid_window")]
        window: usize,
        #[serde(default = "default_grid_bias")]
        bias: f64,
    },
}

fn default_grid() -> f64 {
    0.1
}
fn default_cost_max() -> f64 {
    1.0
}
fn default_bias() -> f64 {
    1.0
}
fn default_chain_bias() -> f64 {
    1.5
}
fn default_side() -> usize {
    5
}
fn default_grid_horizon() -> usize {
    30
}
fn default_grid_window() -> usize {
    10
}
fn default_grid_bias() -> f64 {
    6.0
}

impl Generator {
    pub fn name(&self) -> &'static str {
        match self {
            Generator::RandomTermdp { .. } => "random-termdp",
            Generator::Chain { .. } => "chain",
            Generator::GridworldCoins { .. } => "gridworld-coins",
        }
    }

    pub fn generate(&self, seed: u64) -> Result<TerMdpSpec> {
        match *self {
            Generator::RandomTermdp {
                states,
                actions,
                horizon,
                stationary,
                grid,
                cost_max,
                sign,
                norm_bound,
                bias,
                window,
                sparse,
            } => random_termdp(
                SpecShape::new(states, actions, horizon, stationary),
                RandomCosts {
                    grid,
                    cost_max,
                    sign,
                    norm_bound,
                },
                bias,
                window,
                sparse,
                seed,
            ),
            Generator::Chain { states, horizon, bias } => chain(states, horizon, bias, seed),
            Generator::GridworldCoins {
                width,
                length,
                horizon,
                window,
                bias,
            } => gridworld_coins(width, length, horizon, window, bias, seed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomCosts {
    pub grid: f64,
    pub cost_max: f64,
    pub sign: CostSign,
    pub norm_bound: Option<f64>,
}

fn check_positive(values: &[(usize, &str)]) -> Result<()> {
    for &(v, name) in values {
        if v == 0 {
            return Err(TermdpError::invalid(format!("{name} must be positive")));
        }
    }
    Ok(())
}

/// Random transitions and rewards (multiples of 0.1), grid-aligned costs.
pub fn random_termdp(
    shape: SpecShape,
    costs: RandomCosts,
    bias: f64,
    window: Option<usize>,
    sparse: bool,
    seed: u64,
) -> Result<TerMdpSpec> {
    check_positive(&[
        (shape.num_states, "states"),
        (shape.num_actions, "actions"),
        (shape.horizon, "horizon"),
    ])?;
    if !(costs.grid > 0.0 && costs.cost_max >= 0.0) {
        return Err(TermdpError::invalid("grid must be positive and cost_max non-negative"));
    }
    let mut rng = seeded_rng(seed, 0);
    let n = shape.table_len();
    let s_n = shape.num_states;
    let mut transitions = Vec::with_capacity(n * s_n);
    for _ in 0..n {
        let mut row: Vec<f64> = (0..s_n).map(|_| rng.random_range(0.05..1.0)).collect();
        if sparse && s_n > 1 {
            let keep = rng.random_range(0..s_n);
            for (i, p) in row.iter_mut().enumerate() {
                if i != keep && rng.random::<f64>() < 0.5 {
                    *p = 0.0;
                }
            }
        }
        let total: f64 = row.iter().sum();
        transitions.extend(row.iter().map(|p| p / total));
    }
    let rewards = (0..n).map(|_| rng.random_range(0..=10) as f64 / 10.0).collect();
    let steps = (costs.cost_max / costs.grid).floor() as i64;
    let mut idx: Vec<i64> = (0..n)
        .map(|_| match costs.sign {
            CostSign::NonNegative => rng.random_range(0..=steps),
            CostSign::Signed => rng.random_range(-steps..=steps),
        })
        .collect();
    if let Some(l) = costs.norm_bound {
        let norm = idx.iter().map(|&i| (i as f64 * costs.grid).powi(2)).sum::<f64>().sqrt();
        if norm > l {
            // truncate toward zero so the grid survives and the norm can only shrink
            let factor = l / norm;
            idx.iter_mut().for_each(|i| *i = (*i as f64 * factor).trunc() as i64);
        }
    }
    let cost_values: Vec<f64> = idx.iter().map(|&i| i as f64 * costs.grid).collect();
    TerMdpSpec::new(shape, transitions, rewards, cost_values, bias, window, costs.norm_bound)?
        .with_cost_grid(Some(costs.grid))
}

/// Chain: from state `s`, the safe action stays (prob 0.6) or advances; the risky
/// action advances with prob 0.8. Rewards grow along the chain; risky costs are
/// multiples of 0.1 in `[1, 2]`, drawn from the seed.
pub fn chain(states: usize, horizon: usize, bias: f64, seed: u64) -> Result<TerMdpSpec> {
    check_positive(&[(states, "states"), (horizon, "horizon")])?;
    let mut rng = seeded_rng(seed, 0);
    let shape = SpecShape::new(states, 2, horizon, false);
    let last = states - 1;
    let mut safe_r = Vec::with_capacity(states);
    let mut risky_r = Vec::with_capacity(states);
    let mut risky_c = Vec::with_capacity(states);
    for s in 0..states {
        let base = 0.2 + 0.3 * s as f64 / last.max(1) as f64;
        safe_r.push((base * 10.0).round() / 10.0);
        risky_r.push((((base + 0.5) * 10.0).round() / 10.0).min(1.0));
        risky_c.push(rng.random_range(10..=20) as f64 / 10.0);
    }
    let mut transitions = Vec::new();
    let mut rewards = Vec::new();
    let mut costs = Vec::new();
    for _h in 0..horizon {
        for s in 0..states {
            let next = (s + 1).min(last);
            for a in 0..2 {
                let mut row = vec![0.0; states];
                let stay = if a == 0 { 0.6 } else { 0.2 };
                row[s] += stay;
                row[next] += 1.0 - stay;
                transitions.extend(row);
                rewards.push(if a == 0 { safe_r[s] } else { risky_r[s] });
                costs.push(if a == 0 { 0.0 } else { risky_c[s] });
            }
        }
    }
    TerMdpSpec::new(shape, transitions, rewards, costs, bias, None, None)?.with_cost_grid(Some(0.1))
}

/// Coin and reward layout of the road, indexed `[row][lane]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadLayout {
    pub coins: Vec<Vec<bool>>,
    pub rewards: Vec<Vec<f64>>,
}

pub fn road_layout(width: usize, length: usize, seed: u64) -> RoadLayout {
    let mut rng = seeded_rng(seed, 1);
    let mut coins = vec![vec![false; width]; length];
    let mut rewards = vec![vec![0.0; width]; length];
    // one lane is kept clear of coins everywhere: a zero-cost route always exists
    let clear = rng.random_range(0..width);
    for row in 0..length {
        for lane in 0..width {
            if lane == clear {
                rewards[row][lane] = 0.1;
                continue;
            }
            if rng.random::<f64>() < 0.4 {
                coins[row][lane] = true;
                rewards[row][lane] = 1.0;
            } else {
                rewards[row][lane] = if rng.random::<f64>() < 0.5 { 0.5 } else { 0.1 };
            }
        }
    }
    RoadLayout { coins, rewards }
}

/// State `row * width + lane`. Action `a` moves to lane `lane + a - 1` (clamped) in
/// the next row, wrapping around the road; reward and cost are those of the cell
/// entered.
pub fn gridworld_coins(
    width: usize,
    length: usize,
    horizon: usize,
    window: usize,
    bias: f64,
    seed: u64,
) -> Result<TerMdpSpec> {
    check_positive(&[(width, "width"), (length, "length"), (horizon, "horizon")])?;
    let layout = road_layout(width, length, seed);
    let states = width * length;
    let shape = SpecShape::new(states, 3, horizon, true);
    let mut transitions = Vec::with_capacity(states * 3 * states);
    let mut rewards = Vec::with_capacity(states * 3);
    let mut costs = Vec::with_capacity(states * 3);
    for s in 0..states {
        let (row, lane) = (s / width, s % width);
        for a in 0..3 {
            let lane2 = (lane + a).saturating_sub(1).min(width - 1);
            let row2 = (row + 1) % length;
            let mut t = vec![0.0; states];
            t[row2 * width + lane2] = 1.0;
            transitions.extend(t);
            rewards.push(layout.rewards[row2][lane2]);
            costs.push(if layout.coins[row2][lane2] { 1.0 } else { 0.0 });
        }
    }
    let window = window.min(horizon).max(1);
    // start in the clear lane of row 0
    let start = (0..width).find(|&l| (0..length).all(|r| !layout.coins[r][l])).unwrap_or(0);
    TerMdpSpec::new(shape, transitions, rewards, costs, bias, Some(window), None)?
        .with_cost_grid(Some(1.0))?
        .with_initial_state(start)
}
