//! The work behind each command-line subcommand, returning rows and file contents so
//! callers decide where they go.

use serde::{Deserialize, Serialize};

use super::schema::{self, write_csv};
use crate::error::{Result, TermdpError};
use crate::estimator::{
    build_dataset, confidence_radius, fit_mle, recommended_lambda, BiasMode, CoordinateMap, FitOptions, RadiusMode,
    RadiusParams,
};
use crate::model::{rollout, seeded_rng, Kappa, MarkovPolicy, TerMdpSpec, Trajectory, UniformPolicy};
use crate::planner::{
    evaluate_exact, evaluate_monte_carlo, plan, plan_windowed, CostAwarePolicy, CostLattice, PlanOptions,
};

/// `n` uniform-policy episodes as JSON lines.
pub fn uniform_trajectories(spec: &TerMdpSpec, n: usize, seed: u64) -> Result<String> {
    let mut rng = seeded_rng(seed, 0);
    let mut policy = UniformPolicy {
        num_actions: spec.num_actions(),
    };
    let mut lines = String::new();
    for _ in 0..n {
        lines.push_str(&serde_json::to_string(&rollout(spec, &mut policy, &mut rng)?)?);
        lines.push('\n');
    }
    Ok(lines)
}

pub fn parse_trajectories(text: &str) -> Result<Vec<Trajectory>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRequest {
    pub window: Option<usize>,
    pub lambda: Option<f64>,
    pub norm_bound: Option<f64>,
    pub estimate_bias: bool,
    pub delta: f64,
    pub radius_mode: RadiusMode,
    pub radius_scale: f64,
    pub cost_bound: Option<f64>,
}

impl Default for EstimateRequest {
    fn default() -> Self {
        EstimateRequest {
            window: None,
            lambda: None,
            norm_bound: None,
            estimate_bias: false,
            delta: 0.1,
            radius_mode: RadiusMode::Theory,
            radius_scale: 1.0,
            cost_bound: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub h: usize,
    pub s: usize,
    pub a: usize,
    pub n: u64,
    pub c_true: f64,
    pub c_hat: f64,
    pub abs_err: f64,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateOutput {
    pub c_hat: Vec<f64>,
    pub bias_hat: Option<f64>,
    pub counts: Vec<u64>,
    pub radii: Vec<f64>,
    pub lambda: f64,
    pub objective_value: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub projection_active: bool,
    #[serde(skip)]
    pub rows: Vec<EstimateRow>,
}

impl EstimateOutput {
    pub fn csv(&self) -> Result<String> {
        write_csv(&self.rows, &schema::ESTIMATE)
    }
}

/// Fits costs on the shape of `spec`; error columns are NaN without `truth`.
pub fn estimate(
    spec: &TerMdpSpec,
    trajectories: &[Trajectory],
    truth: Option<&TerMdpSpec>,
    req: &EstimateRequest,
) -> Result<EstimateOutput> {
    let coords = CoordinateMap::for_spec(spec);
    let data = build_dataset(coords, trajectories, req.window.unwrap_or(spec.window()))?;
    let norm_bound = req.norm_bound.unwrap_or(spec.norm_bound().max(1e-12));
    let lambda = req
        .lambda
        .unwrap_or_else(|| recommended_lambda(spec.num_states(), spec.num_actions(), spec.horizon(), norm_bound));
    let bias = if req.estimate_bias { BiasMode::Estimate } else { BiasMode::Known(spec.bias()) };
    let est = fit_mle(&data, &FitOptions::new(lambda, norm_bound, bias))?;
    let kappa = Kappa::from_cost_bound(spec.horizon(), req.cost_bound.unwrap_or(norm_bound), spec.bias())?;
    let radii = confidence_radius(
        data.counts(),
        coords,
        RadiusParams {
            kappa: kappa.value(),
            num_states: spec.num_states(),
            num_actions: spec.num_actions(),
            horizon: spec.horizon(),
            norm_bound,
            delta: req.delta,
            episode: trajectories.len().max(1),
            scale: req.radius_scale,
            mode: req.radius_mode,
        },
    )?;
    let rows = (0..coords.dim())
        .map(|i| {
            let (h, s, a) = coords.triple(i);
            let c_true = truth.map_or(f64::NAN, |t| t.costs()[i]);
            EstimateRow {
                h,
                s,
                a,
                n: est.counts[i],
                c_true,
                c_hat: est.c_hat[i],
                abs_err: (est.c_hat[i] - c_true).abs(),
                radius: radii.radius[i],
            }
        })
        .collect();
    Ok(EstimateOutput {
        c_hat: est.c_hat,
        bias_hat: est.bias_hat,
        counts: est.counts,
        radii: radii.radius,
        lambda: est.lambda,
        objective_value: est.objective_value,
        iterations: est.iterations,
        gradient_norm: est.gradient_norm,
        projection_active: est.projection_active,
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlanRequest {
    pub dc: Option<f64>,
    pub clip: Option<f64>,
    pub epsilon: Option<f64>,
    pub clipped: bool,
    pub clip_values: bool,
}

impl PlanRequest {
    /// `--epsilon` wins; otherwise `dc`, then the spec's cost grid, then 0.1.
    pub fn lattice(&self, spec: &TerMdpSpec) -> Result<CostLattice> {
        if let Some(eps) = self.epsilon {
            return CostLattice::from_epsilon(eps, spec.horizon(), self.clipped);
        }
        let lattice = CostLattice::new(self.dc.or(spec.cost_grid()).unwrap_or(0.1))?;
        match self.clip {
            Some(c) => lattice.with_clip(c),
            None => Ok(lattice),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRow {
    pub h: usize,
    pub s: usize,
    pub cost_index: i64,
    pub cost: f64,
    pub value: f64,
    pub action: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanOutput {
    pub initial_value: f64,
    pub resolution: f64,
    pub max_bins: usize,
    pub backups: u64,
    /// Empty for windowed specs, whose memory is not a single accumulated cost.
    pub rows: Vec<PlanRow>,
}

impl PlanOutput {
    pub fn csv(&self) -> Result<String> {
        write_csv(&self.rows, &schema::PLAN)
    }
}

pub fn plan_spec(spec: &TerMdpSpec, req: &PlanRequest) -> Result<PlanOutput> {
    let lattice = req.lattice(spec)?;
    let options = PlanOptions {
        clip_values: req.clip_values,
    };
    if spec.window() < spec.horizon() {
        let p = plan_windowed(spec, &lattice, options)?;
        return Ok(PlanOutput {
            initial_value: p.initial_value(),
            resolution: lattice.resolution(),
            max_bins: p.num_states_expanded(),
            backups: 0,
            rows: Vec::new(),
        });
    }
    let table = plan(spec, &lattice, options)?;
    let mut rows = Vec::with_capacity(table.num_cells());
    for (h, range) in table.layers().iter().enumerate().take(spec.horizon()) {
        for s in 0..spec.num_states() {
            for idx in range.lo..=range.hi {
                rows.push(PlanRow {
                    h,
                    s,
                    cost_index: idx,
                    cost: lattice.value(idx),
                    value: table.value(h, s, idx),
                    action: table.action(h, s, idx),
                });
            }
        }
    }
    Ok(PlanOutput {
        initial_value: table.initial_value(spec.initial_state()),
        resolution: lattice.resolution(),
        max_bins: table.max_bins(),
        backups: table.backups(),
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMethod {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub policy: String,
    pub method: String,
    pub value: f64,
    pub std_error: f64,
    pub episodes: usize,
}

fn evaluate_with<P: CostAwarePolicy>(
    spec: &TerMdpSpec,
    policy: P,
    method: EvalMethod,
    episodes: usize,
    seed: u64,
) -> Result<(f64, f64, usize)> {
    match method {
        EvalMethod::Exact => Ok((evaluate_exact(spec, &policy)?, 0.0, 0)),
        EvalMethod::MonteCarlo => {
            let mut rng = seeded_rng(seed, 3);
            let mc = evaluate_monte_carlo(spec, policy, episodes, &mut rng)?;
            Ok((mc.mean, mc.std_error, mc.episodes))
        }
    }
}

/// Value of `optimal` (planned at `dc`), `uniform` or `constant:<a>` under the true spec.
pub fn evaluate_policy(
    spec: &TerMdpSpec,
    policy: &str,
    method: EvalMethod,
    episodes: usize,
    dc: Option<f64>,
    seed: u64,
) -> Result<EvalRow> {
    let (value, std_error, n) = match policy.split_once(':') {
        None if policy == "optimal" => {
            let lattice = PlanRequest {
                dc,
                ..PlanRequest::default()
            }
            .lattice(spec)?;
            if spec.window() < spec.horizon() {
                evaluate_with(spec, plan_windowed(spec, &lattice, PlanOptions::default())?, method, episodes, seed)?
            } else {
                evaluate_with(spec, plan(spec, &lattice, PlanOptions::default())?, method, episodes, seed)?
            }
        }
        None if policy == "uniform" => evaluate_with(
            spec,
            UniformPolicy {
                num_actions: spec.num_actions(),
            },
            method,
            episodes,
            seed,
        )?,
        Some(("constant", a)) => {
            let a: usize = a
                .parse()
                .map_err(|_| TermdpError::Config(format!("bad action in {policy:?}")))?;
            spec.check_state_action(0, a)?;
            evaluate_with(spec, MarkovPolicy::constant(spec.num_states(), spec.horizon(), a), method, episodes, seed)?
        }
        _ => return Err(TermdpError::Config(format!("unknown policy {policy:?}"))),
    };
    Ok(EvalRow {
        policy: policy.to_string(),
        method: match method {
            EvalMethod::Exact => "exact".into(),
            EvalMethod::MonteCarlo => "monte-carlo".into(),
        },
        value,
        std_error,
        episodes: n,
    })
}
