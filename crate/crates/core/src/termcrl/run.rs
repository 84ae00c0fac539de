//! The optimistic learning loop with per-episode regret bookkeeping.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::optimism::{optimistic_model, BonusSet, EmpiricalModel};
use crate::error::{Result, TermdpError};
use crate::estimator::{
    confidence_radius, fit_mle, recommended_lambda, BiasMode, CoordinateMap, CostEstimate, FitOptions, RadiusMode,
    RadiusParams, TerminationDataset,
};
use crate::model::{rollout, seeded_rng, Kappa, TerMdpSpec};
use crate::planner::{evaluate_exact, plan, AugmentedValueTable, CostLattice, PlanOptions, Tracking};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Bonuses on rewards, transitions and costs; costs fitted from terminations.
    #[default]
    Optimistic,
    /// Same reward/transition optimism, but the terminator is ignored: costs fixed at 0.
    Naive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RefitSchedule {
    /// Every episode up to 1000 episodes, doubling beyond.
    #[default]
    Auto,
    EveryEpisode,
    /// Refit when some coordinate's count has doubled since the last fit.
    Doubling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TermCrlConfig {
    pub episodes: usize,
    pub delta: f64,
    /// Defaults to `SAH / (L√H + 0.5)`.
    pub lambda: Option<f64>,
    /// Lattice resolution `Δc` for planning.
    pub resolution: f64,
    pub bonus_scale: f64,
    pub radius_mode: RadiusMode,
    pub estimate_bias: bool,
    pub variant: Variant,
    pub refit: RefitSchedule,
    /// Per-entry cost bound used for κ; defaults to the norm bound `L`.
    pub cost_bound: Option<f64>,
    /// Record wall-clock time per episode (breaks byte-identical reruns).
    pub timing: bool,
    pub seed: u64,
}

impl Default for TermCrlConfig {
    fn default() -> Self {
        TermCrlConfig {
            episodes: 1000,
            delta: 0.1,
            lambda: None,
            resolution: 0.1,
            bonus_scale: 1.0,
            radius_mode: RadiusMode::Theory,
            estimate_bias: false,
            variant: Variant::Optimistic,
            refit: RefitSchedule::Auto,
            cost_bound: None,
            timing: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretRecord {
    pub k: usize,
    pub v_star: f64,
    pub v_pik: f64,
    pub regret: f64,
    pub cum_regret: f64,
    pub cost_l2_err: f64,
    pub cost_max_err: f64,
    pub mle_iters: usize,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegretTrace {
    pub records: Vec<RegretRecord>,
    /// `V̄_1` of the planned optimistic model, per episode.
    pub optimistic_values: Vec<f64>,
    pub final_estimate: Option<CostEstimate>,
}

impl RegretTrace {
    pub fn cumulative_regret(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.cum_regret)
    }

    /// Mean instantaneous regret over the last `n` episodes.
    pub fn tail_mean_regret(&self, n: usize) -> f64 {
        let tail = &self.records[self.records.len().saturating_sub(n)..];
        if tail.is_empty() {
            return 0.0;
        }
        tail.iter().map(|r| r.regret).sum::<f64>() / tail.len() as f64
    }

    pub fn to_csv(&self) -> Result<String> {
        crate::harness::schema::write_csv(&self.records, &crate::harness::schema::TERMCRL)
    }
}

fn check_config(spec: &TerMdpSpec, config: &TermCrlConfig) -> Result<()> {
    if config.episodes == 0 {
        return Err(TermdpError::invalid("need at least one episode"));
    }
    if !(config.delta > 0.0 && config.delta < 1.0) {
        return Err(TermdpError::invalid("delta must lie in (0, 1)"));
    }
    if !(config.bonus_scale >= 0.0 && config.bonus_scale.is_finite()) {
        return Err(TermdpError::invalid("bonus scale must be non-negative"));
    }
    if spec.window() < spec.horizon() {
        return Err(TermdpError::UnsupportedConfiguration(
            "the optimistic learner assumes the terminator sees the whole episode (window = H)".into(),
        ));
    }
    if spec.cost_grid().is_none() {
        return Err(TermdpError::UnsupportedConfiguration(
            "regret is evaluated exactly and needs grid-aligned true costs".into(),
        ));
    }
    Ok(())
}

/// Optimal value of the true spec on its own cost grid.
pub fn optimal_value(spec: &TerMdpSpec) -> Result<(f64, AugmentedValueTable)> {
    let grid = spec
        .cost_grid()
        .ok_or_else(|| TermdpError::UnsupportedConfiguration("true costs need a declared grid".into()))?;
    let table = plan(spec, &CostLattice::new(grid)?, PlanOptions::default())?;
    Ok((table.initial_value(spec.initial_state()), table))
}

fn refit_due(schedule: RefitSchedule, episodes: usize, counts: &[u64], last: &[u64]) -> bool {
    let doubling = || counts.iter().zip(last).any(|(&n, &m)| n > 0 && n >= 2 * m.max(1));
    match schedule {
        RefitSchedule::EveryEpisode => true,
        RefitSchedule::Doubling => doubling(),
        RefitSchedule::Auto if episodes <= 1000 => true,
        RefitSchedule::Auto => doubling(),
    }
}

/// Runs `K` episodes against the hidden `spec`. The agent knows the shape, bias (unless
/// it is estimated), window, initial state and norm bound; everything else is learned.
pub fn run(spec: &TerMdpSpec, config: &TermCrlConfig) -> Result<RegretTrace> {
    check_config(spec, config)?;
    let shape = spec.shape();
    let coords = CoordinateMap::for_spec(spec);
    let dim = coords.dim();
    let norm_bound = spec.norm_bound();
    let lambda = config
        .lambda
        .unwrap_or_else(|| recommended_lambda(shape.num_states, shape.num_actions, shape.horizon, norm_bound));
    let kappa = Kappa::from_cost_bound(shape.horizon, config.cost_bound.unwrap_or(norm_bound), spec.bias())?;
    let lattice = CostLattice::new(config.resolution)?;
    let (v_star, _) = optimal_value(spec)?;
    let s0 = spec.initial_state();

    let mut rng = seeded_rng(config.seed, 0);
    let mut empirical = EmpiricalModel::new(shape);
    let mut data = TerminationDataset::new(coords, spec.window())?;
    let bias_mode = if config.estimate_bias {
        BiasMode::Estimate
    } else {
        BiasMode::Known(spec.bias())
    };
    let mut estimate = CostEstimate {
        coords,
        c_hat: vec![0.0; dim],
        bias_hat: config.estimate_bias.then_some(0.0),
        counts: vec![0; dim],
        lambda,
        objective_value: 0.0,
        iterations: 0,
        gradient_norm: 0.0,
        projection_active: false,
    };
    let mut last_fit_counts = vec![0u64; dim];
    let mut fitted_once = false;

    let mut records = Vec::with_capacity(config.episodes);
    let mut optimistic_values = Vec::with_capacity(config.episodes);
    let mut cum_regret = 0.0;
    let mut cached: Option<(Vec<u32>, f64)> = None;

    for k in 1..=config.episodes {
        let started = Instant::now();
        let mut mle_iters = 0;
        let bonuses = match config.variant {
            Variant::Naive => {
                let zero_radii = crate::estimator::ConfidenceRadii {
                    radius: vec![0.0; dim],
                    coords,
                    params: radius_params(config, kappa, shape, norm_bound, k),
                };
                BonusSet::new(shape, empirical.visits(), &zero_radii, config.episodes, config.delta, config.bonus_scale)?
            }
            Variant::Optimistic => {
                if !fitted_once || refit_due(config.refit, config.episodes, data.counts(), &last_fit_counts) {
                    let mut opts = FitOptions::new(lambda, norm_bound, bias_mode);
                    if fitted_once {
                        opts = opts.with_warm_start(&estimate);
                    }
                    estimate = fit_mle(&data, &opts).map_err(|e| e.with_context(format!("episode {k}")))?;
                    mle_iters = estimate.iterations;
                    last_fit_counts.copy_from_slice(data.counts());
                    fitted_once = true;
                }
                let radii = confidence_radius(data.counts(), coords, radius_params(config, kappa, shape, norm_bound, k))?;
                BonusSet::new(shape, empirical.visits(), &radii, config.episodes, config.delta, config.bonus_scale)?
            }
        };
        let optimistic = optimistic_model(spec, &empirical, &estimate, &bonuses)?;
        let table = plan(&optimistic, &lattice, PlanOptions { clip_values: true })?;
        optimistic_values.push(table.initial_value(s0));

        let v_pik = policy_value(spec, &table, &mut cached)?;
        let regret = v_star - v_pik;
        cum_regret += regret;

        let traj = rollout(spec, &mut Tracking::new(&table), &mut rng)?;
        empirical.update(&traj)?;
        data.push_trajectory(&traj)?;

        let (l2, max) = cost_error(spec.costs(), &estimate.c_hat);
        records.push(RegretRecord {
            k,
            v_star,
            v_pik,
            regret,
            cum_regret,
            cost_l2_err: l2,
            cost_max_err: max,
            mle_iters,
            wall_ms: if config.timing {
                started.elapsed().as_secs_f64() * 1e3
            } else {
                0.0
            },
        });
    }
    Ok(RegretTrace {
        records,
        optimistic_values,
        final_estimate: matches!(config.variant, Variant::Optimistic).then_some(estimate),
    })
}

fn radius_params(config: &TermCrlConfig, kappa: Kappa, shape: crate::model::SpecShape, norm_bound: f64, k: usize) -> RadiusParams {
    RadiusParams {
        kappa: kappa.value(),
        num_states: shape.num_states,
        num_actions: shape.num_actions,
        horizon: shape.horizon,
        norm_bound,
        delta: config.delta,
        episode: k,
        scale: config.bonus_scale.max(f64::MIN_POSITIVE),
        mode: config.radius_mode,
    }
}

/// Exact true value of the greedy policy; reuses the last result when the decisions
/// on every reachable (step, state, planned-cost) triple are unchanged.
fn policy_value(spec: &TerMdpSpec, table: &AugmentedValueTable, cached: &mut Option<(Vec<u32>, f64)>) -> Result<f64> {
    let signature = reachable_decisions(spec, table);
    if let Some((sig, v)) = cached {
        if *sig == signature {
            return Ok(*v);
        }
    }
    let v = evaluate_exact(spec, table)?;
    *cached = Some((signature, v));
    Ok(v)
}

/// Actions (and planned cost steps) along every path the policy can take, in a fixed
/// traversal order. Two tables with equal signatures induce the same behaviour.
fn reachable_decisions(spec: &TerMdpSpec, table: &AugmentedValueTable) -> Vec<u32> {
    use std::collections::BTreeSet;
    let mut out = Vec::new();
    let mut frontier: BTreeSet<(usize, i64)> = BTreeSet::new();
    frontier.insert((spec.initial_state(), 0));
    for h in 0..spec.horizon() {
        let mut next = BTreeSet::new();
        for &(s, acc) in &frontier {
            let a = table.action(h, s, acc);
            let acc2 = table.next_index(h, s, a, acc);
            out.push(s as u32);
            out.push(a as u32);
            out.push(acc2 as u32);
            if h + 1 < spec.horizon() {
                for (s2, &p) in spec.transition_row(h, s, a).iter().enumerate() {
                    if p > 0.0 {
                        next.insert((s2, acc2));
                    }
                }
            }
        }
        out.push(u32::MAX);
        frontier = next;
    }
    out
}

fn cost_error(truth: &[f64], fitted: &[f64]) -> (f64, f64) {
    let mut sq = 0.0;
    let mut max = 0.0f64;
    for (t, f) in truth.iter().zip(fitted) {
        let d = (t - f).abs();
        sq += d * d;
        max = max.max(d);
    }
    (sq.sqrt(), max)
}
