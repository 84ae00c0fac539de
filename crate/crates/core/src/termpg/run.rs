//! The policy-gradient training loop and its variants.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::ensemble::{train_ensemble, Aggregation, CostEnsemble, EnsembleOptions};
use super::policy::{augment, policy_update, AugmentedSoftmax, CostBuckets, Discount, Shaping, SoftmaxPolicy, UpdateOptions};
use super::windows::ReplayBuffer;
use crate::error::{Result, TermdpError};
use crate::model::{rollout, seeded_rng, TerMdpSpec};
use crate::planner::Tracking;

/// Algorithm variant. String forms: `plain`, `rs:<p>`, `penalty:<alpha>`, `naive`,
/// `no-optimism`, `no-dyn-discount`, `std:<alpha>`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum PgVariant {
    /// Cost-bucket inputs, per-step minimum over the ensemble, dynamic discount.
    #[default]
    Plain,
    /// Cost-blind policy with constant discount and a penalty `p` at termination.
    TerminationShaping(f64),
    /// Cost-blind policy with constant discount, rewards reduced by `alpha` times the
    /// optimistic window cost.
    CostPenalty(f64),
    /// Cost-blind policy with constant discount.
    Naive,
    /// Ensemble mean instead of minimum.
    NoOptimism,
    /// Constant discount instead of the dynamic one.
    NoDynamicDiscount,
    /// Ensemble mean minus `alpha` standard deviations.
    Std(f64),
}

impl PgVariant {
    fn uses_ensemble(&self) -> bool {
        !matches!(self, PgVariant::Naive | PgVariant::TerminationShaping(_))
    }

    fn cost_aware(&self) -> bool {
        matches!(
            self,
            PgVariant::Plain | PgVariant::NoOptimism | PgVariant::NoDynamicDiscount | PgVariant::Std(_)
        )
    }

    fn aggregation(&self) -> Aggregation {
        match self {
            PgVariant::NoOptimism => Aggregation::Mean,
            PgVariant::Std(alpha) => Aggregation::MeanMinusStd(*alpha),
            _ => Aggregation::Min,
        }
    }

    fn dynamic_discount(&self) -> bool {
        matches!(self, PgVariant::Plain | PgVariant::NoOptimism | PgVariant::Std(_))
    }

    fn shaping(&self) -> Shaping {
        match self {
            PgVariant::TerminationShaping(p) => Shaping::TerminationPenalty(*p),
            PgVariant::CostPenalty(alpha) => Shaping::CostPenalty(*alpha),
            _ => Shaping::None,
        }
    }
}

impl fmt::Display for PgVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PgVariant::Plain => write!(f, "plain"),
            PgVariant::TerminationShaping(p) => write!(f, "rs:{p}"),
            PgVariant::CostPenalty(a) => write!(f, "penalty:{a}"),
            PgVariant::Naive => write!(f, "naive"),
            PgVariant::NoOptimism => write!(f, "no-optimism"),
            PgVariant::NoDynamicDiscount => write!(f, "no-dyn-discount"),
            PgVariant::Std(a) => write!(f, "std:{a}"),
        }
    }
}

impl FromStr for PgVariant {
    type Err = TermdpError;

    fn from_str(s: &str) -> Result<Self> {
        let param = |v: &str| -> Result<f64> {
            v.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| TermdpError::invalid(format!("bad variant parameter in {s:?}")))
        };
        match s.split_once(':') {
            None => match s {
                "plain" => Ok(PgVariant::Plain),
                "naive" => Ok(PgVariant::Naive),
                "no-optimism" => Ok(PgVariant::NoOptimism),
                "no-dyn-discount" => Ok(PgVariant::NoDynamicDiscount),
                _ => Err(TermdpError::invalid(format!("unknown variant {s:?}"))),
            },
            Some(("rs", v)) => Ok(PgVariant::TerminationShaping(param(v)?)),
            Some(("penalty", v)) => Ok(PgVariant::CostPenalty(param(v)?)),
            Some(("std", v)) => Ok(PgVariant::Std(param(v)?)),
            _ => Err(TermdpError::invalid(format!("unknown variant {s:?}"))),
        }
    }
}

impl Serialize for PgVariant {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PgVariant {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TermPgConfig {
    pub iterations: usize,
    pub rollouts_per_iteration: usize,
    pub variant: PgVariant,
    pub ensemble_members: usize,
    pub buffer_capacity: usize,
    /// Window the agent assumes; defaults to the environment's.
    pub window: Option<usize>,
    pub lambda: f64,
    pub norm_bound: f64,
    pub learning_rate: f64,
    pub gae_lambda: f64,
    pub value_rate: f64,
    /// Discount of the variants without a dynamic one.
    pub gamma: f64,
    pub bucket_width: f64,
    /// Defaults to `window + 1` buckets of width `bucket_width`.
    pub buckets: Option<usize>,
    pub timing: bool,
    pub seed: u64,
}

impl Default for TermPgConfig {
    fn default() -> Self {
        TermPgConfig {
            iterations: 200,
            rollouts_per_iteration: 32,
            variant: PgVariant::Plain,
            ensemble_members: 3,
            buffer_capacity: 1000,
            window: None,
            lambda: 1.0,
            norm_bound: 100.0,
            learning_rate: 0.5,
            gae_lambda: 1.0,
            value_rate: 0.1,
            gamma: 0.99,
            bucket_width: 1.0,
            buckets: None,
            timing: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PgRecord {
    pub iter: usize,
    pub mean_return: f64,
    pub term_rate: f64,
    /// L2 distance of the ensemble-mean costs to the truth; NaN for cost-blind variants.
    pub cost_l2_err: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone)]
pub struct PgTrace {
    pub records: Vec<PgRecord>,
    pub policy: SoftmaxPolicy,
    pub ensemble: Option<CostEnsemble>,
}

impl PgTrace {
    /// Mean training return over the last `n` iterations.
    pub fn tail_mean_return(&self, n: usize) -> f64 {
        let n = n.min(self.records.len()).max(1);
        self.records[self.records.len().saturating_sub(n)..]
            .iter()
            .map(|r| r.mean_return)
            .sum::<f64>()
            / n as f64
    }

    pub fn to_csv(&self) -> Result<String> {
        crate::harness::schema::write_csv(&self.records, &crate::harness::schema::TERMPG)
    }
}

fn check_config(spec: &TerMdpSpec, config: &TermPgConfig) -> Result<()> {
    if !spec.stationary() {
        return Err(TermdpError::UnsupportedConfiguration(
            "the policy-gradient learner shares costs across steps; the spec must be stationary".into(),
        ));
    }
    if config.iterations == 0 || config.rollouts_per_iteration == 0 {
        return Err(TermdpError::invalid("need at least one iteration and one rollout"));
    }
    if config.ensemble_members == 0 || config.buffer_capacity == 0 {
        return Err(TermdpError::invalid("ensemble size and buffer capacity must be positive"));
    }
    if config.window == Some(0) {
        return Err(TermdpError::invalid("window must be at least 1"));
    }
    for (name, v) in [
        ("learning rate", config.learning_rate),
        ("lambda", config.lambda),
        ("norm bound", config.norm_bound),
        ("bucket width", config.bucket_width),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(TermdpError::invalid(format!("{name} must be positive")));
        }
    }
    if !(0.0..=1.0).contains(&config.gamma) || !(0.0..=1.0).contains(&config.gae_lambda) {
        return Err(TermdpError::invalid("gamma and gae_lambda must lie in [0, 1]"));
    }
    if !(0.0..=1.0).contains(&config.value_rate) {
        return Err(TermdpError::invalid("value rate must lie in [0, 1]"));
    }
    Ok(())
}

/// Trains a tabular policy on `spec` for `config.iterations` rounds of
/// `config.rollouts_per_iteration` rollouts.
pub fn run(spec: &TerMdpSpec, config: &TermPgConfig) -> Result<PgTrace> {
    check_config(spec, config)?;
    let (s_n, a_n) = (spec.num_states(), spec.num_actions());
    let window = config.window.unwrap_or(spec.window());
    let variant = config.variant;
    let buckets = if variant.cost_aware() {
        CostBuckets::new(config.bucket_width, config.buckets.unwrap_or(window + 1))?
    } else {
        CostBuckets::none()
    };
    let mut policy = SoftmaxPolicy::new(s_n, a_n, buckets);
    let mut values = vec![0.0; policy.num_inputs()];
    let mut buffer = ReplayBuffer::new(config.buffer_capacity)?;
    let mut ensemble: Option<CostEnsemble> = None;
    let mut roll_rng = seeded_rng(config.seed, 1);
    let mut boot_rng = seeded_rng(config.seed, 2);
    let ens_opts = EnsembleOptions {
        members: config.ensemble_members,
        window,
        lambda: config.lambda,
        norm_bound: config.norm_bound,
    };
    let update = UpdateOptions {
        learning_rate: config.learning_rate,
        gae_lambda: config.gae_lambda,
        value_rate: config.value_rate,
    };
    let zeros = vec![0.0; s_n * a_n];
    let mut records = Vec::with_capacity(config.iterations);

    for iter in 0..config.iterations {
        let started = Instant::now();
        let costs = ensemble.as_ref().map_or_else(|| zeros.clone(), |e| e.aggregate_costs(variant.aggregation()));
        let trajectories = {
            let mut agent = Tracking::new(AugmentedSoftmax {
                policy: &policy,
                costs: &costs,
                window,
            });
            (0..config.rollouts_per_iteration)
                .map(|_| rollout(spec, &mut agent, &mut roll_rng))
                .collect::<Result<Vec<_>>>()?
        };
        let n = trajectories.len() as f64;
        let mean_return = trajectories.iter().map(|t| t.total_reward()).sum::<f64>() / n;
        let term_rate = trajectories.iter().filter(|t| t.terminated()).count() as f64 / n;
        for t in &trajectories {
            buffer.push(t.clone());
        }

        if variant.uses_ensemble() {
            let fresh = train_ensemble(&buffer, s_n, a_n, &ens_opts, ensemble.as_ref(), &mut boot_rng)
                .map_err(|e| e.with_context(format!("iteration {iter}")))?;
            ensemble = Some(fresh);
        }
        let (costs, bias) = match &ensemble {
            Some(e) => (e.aggregate_costs(variant.aggregation()), e.aggregate_bias(variant.aggregation())),
            None => (zeros.clone(), 0.0),
        };
        let discount = if variant.dynamic_discount() {
            Discount::Dynamic { bias }
        } else {
            Discount::Constant(config.gamma)
        };
        let augmented: Vec<_> = trajectories
            .iter()
            .map(|t| augment(t, &policy, &costs, window, discount, variant.shaping()))
            .collect();
        policy_update(&mut policy, &mut values, &augmented, &update)
            .map_err(|e| e.with_context(format!("iteration {iter}")))?;

        let cost_l2_err = match &ensemble {
            Some(e) => e
                .mean_costs()
                .iter()
                .zip(spec.costs())
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt(),
            None => f64::NAN,
        };
        records.push(PgRecord {
            iter,
            mean_return,
            term_rate,
            cost_l2_err,
            wall_ms: if config.timing {
                started.elapsed().as_secs_f64() * 1e3
            } else {
                0.0
            },
        });
    }
    Ok(PgTrace {
        records,
        policy,
        ensemble,
    })
}
