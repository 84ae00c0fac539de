//! Acceptance run. One line per criterion; exits non-zero if any fails.
//!
//! `cargo test --release --test acceptance -- 4 7` runs only criteria 4 and 7.
//! Reference values come from small independent implementations below, not from
//! the library's own helpers.

use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use termdp::estimator::{build_dataset, gradient, CoordinateMap, RadiusMode, TerminationDataset};
use termdp::harness::commands::{self, EstimateRequest, EvalMethod, PlanRequest};
use termdp::harness::{CostSign, ExperimentConfig, Generator};
use termdp::model::{TerMdpSpec, Trajectory};
use termdp::oracle::{brute_force_optimal, brute_force_value, Replay};
use termdp::planner::{plan, plan_windowed, AugmentedValueTable, CostLattice, PlanOptions};
use termdp::termcrl::{self, TermCrlConfig, Variant};
use termdp::termpg::{self, split_windows, PgVariant, TermPgConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

type Check = fn() -> Outcome;

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

fn tiny_random(rng: &mut ChaCha8Rng, max_s: usize, max_a: usize, max_h: usize, grid: f64) -> Generator {
    let horizon = rng.random_range(1..=max_h);
    Generator::RandomTermdp {
        states: rng.random_range(1..=max_s),
        actions: rng.random_range(1..=max_a),
        horizon,
        stationary: rng.random_bool(0.3),
        grid,
        cost_max: 1.0,
        sign: if rng.random_bool(0.3) { CostSign::Signed } else { CostSign::NonNegative },
        norm_bound: None,
        bias: rng.random_range(-1.0..2.0),
        window: Some(rng.random_range(1..=horizon)),
        sparse: true,
    }
}

fn planner_value(spec: &TerMdpSpec, lattice: &CostLattice) -> f64 {
    if spec.window() < spec.horizon() {
        plan_windowed(spec, lattice, PlanOptions::default()).unwrap().initial_value()
    } else {
        plan(spec, lattice, PlanOptions::default()).unwrap().initial_value(spec.initial_state())
    }
}

/// Least-squares slope of log y against log x.
fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}

// ---------------------------------------------------------------- criterion 1

fn likelihood_by_hand(data: &TerminationDataset, c: &[f64], bias: f64, lambda: f64) -> f64 {
    let mut total = 0.0;
    for (visits, label) in data.examples() {
        let z: f64 = visits.entries().iter().map(|&(i, m)| m as f64 * c[i]).sum::<f64>() - bias;
        total += if *label == 1 { log_sigmoid(z) } else { log_sigmoid(-z) };
    }
    total - lambda * c.iter().map(|x| x * x).sum::<f64>()
}

fn gradient_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let spec = tiny_random(&mut rng, 3, 2, 5, 0.1).generate(i).unwrap();
        let trajs = commands::parse_trajectories(&commands::uniform_trajectories(&spec, 40, i).unwrap()).unwrap();
        let coords = CoordinateMap::for_spec(&spec);
        let data = build_dataset(coords, &trajs, spec.window()).unwrap();
        let c: Vec<f64> = (0..coords.dim()).map(|_| rng.random_range(-1.0..1.5)).collect();
        let bias = rng.random_range(-1.0..3.0);
        let lambda = rng.random_range(0.05..3.0);
        let g = gradient(&data, &c, bias, lambda).unwrap();
        let step = 1e-5;
        for j in 0..c.len() {
            let mut up = c.clone();
            let mut down = c.clone();
            up[j] += step;
            down[j] -= step;
            let fd = (likelihood_by_hand(&data, &up, bias, lambda) - likelihood_by_hand(&data, &down, bias, lambda))
                / (2.0 * step);
            worst = worst.max((g[j] - fd).abs() / fd.abs().max(1.0));
        }
    }
    outcome(worst <= 1e-6, format!("max relative error {worst:.2e} over 100 instances (limit 1e-6)"))
}

// ---------------------------------------------------------------- criterion 2

fn planted() -> TerMdpSpec {
    Generator::RandomTermdp {
        states: 3,
        actions: 2,
        horizon: 4,
        stationary: false,
        grid: 0.5,
        cost_max: 3.0,
        sign: CostSign::NonNegative,
        norm_bound: None,
        bias: 6.0,
        window: None,
        sparse: false,
    }
    .generate(7)
    .unwrap()
}

fn cost_recovery() -> Outcome {
    let spec = planted();
    let all = commands::parse_trajectories(&commands::uniform_trajectories(&spec, 50_000, 11).unwrap()).unwrap();
    let req = EstimateRequest::default();
    let mut curve = Vec::new();
    let mut worst_full = 0.0f64;
    let mut covered = 0;
    for n in [3125, 6250, 12_500, 25_000, 50_000] {
        let out = commands::estimate(&spec, &all[..n], Some(&spec), &req).unwrap();
        let seen: Vec<f64> = out.rows.iter().filter(|r| r.n > 0).map(|r| r.abs_err).collect();
        curve.push((n as f64, seen.iter().sum::<f64>() / seen.len() as f64));
        if n == 50_000 {
            for r in out.rows.iter().filter(|r| r.n >= 5000) {
                worst_full = worst_full.max(r.abs_err);
                covered += 1;
            }
        }
    }
    let slope = log_log_slope(&curve);
    outcome(
        worst_full <= 0.05 && slope <= -0.4 && covered > 0,
        format!("max |c_hat - c| = {worst_full:.4} on {covered} coords with n >= 5000 (limit 0.05); slope {slope:.3} (limit -0.4)"),
    )
}

// ---------------------------------------------------------------- criterion 3

fn confidence_coverage() -> Outcome {
    let spec = Generator::RandomTermdp {
        states: 2,
        actions: 2,
        horizon: 3,
        stationary: false,
        grid: 0.1,
        cost_max: 1.0,
        sign: CostSign::NonNegative,
        norm_bound: None,
        bias: 1.0,
        window: None,
        sparse: false,
    }
    .generate(3)
    .unwrap();
    let req = EstimateRequest {
        delta: 0.1,
        radius_mode: RadiusMode::Theory,
        ..EstimateRequest::default()
    };
    let violations: usize = (0..200u64)
        .into_par_iter()
        .map(|seed| {
            let trajs =
                commands::parse_trajectories(&commands::uniform_trajectories(&spec, 300, 1000 + seed).unwrap()).unwrap();
            let out = commands::estimate(&spec, &trajs, Some(&spec), &req).unwrap();
            usize::from(out.rows.iter().any(|r| r.abs_err > r.radius))
        })
        .sum();
    let rate = violations as f64 / 200.0;
    outcome(rate <= 0.1, format!("{violations}/200 fits with a coordinate outside its radius, rate {rate:.3} (limit 0.1)"))
}

// ---------------------------------------------------------------- criterion 4

fn augmented_sufficiency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst = 0.0f64;
    let mut windowed = 0;
    for i in 0..20 {
        let spec = tiny_random(&mut rng, 3, 2, 4, 0.1).generate(i).unwrap();
        if spec.window() < spec.horizon() {
            windowed += 1;
        }
        let v_star = brute_force_optimal(&spec).unwrap().value;
        let v = planner_value(&spec, &CostLattice::new(0.1).unwrap());
        worst = worst.max((v - v_star).abs());
    }
    outcome(worst <= 1e-9, format!("max |V_dp - V_history| = {worst:.2e} over 20 specs, {windowed} windowed (limit 1e-9)"))
}

// ---------------------------------------------------------------- criterion 5

fn discounted_by_hand(spec: &TerMdpSpec, gamma: f64) -> f64 {
    let (s_n, a_n) = (spec.num_states(), spec.num_actions());
    let mut v = vec![0.0; s_n];
    for h in (0..spec.horizon()).rev() {
        v = (0..s_n)
            .map(|s| {
                (0..a_n)
                    .map(|a| {
                        let next: f64 = spec.transition_row(h, s, a).iter().zip(&v).map(|(p, x)| p * x).sum();
                        spec.reward(h, s, a) + gamma * next
                    })
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
    }
    v[spec.initial_state()]
}

fn discounted_reduction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst = 0.0f64;
    for i in 0..20 {
        let g = Generator::RandomTermdp {
            states: rng.random_range(1..=6),
            actions: rng.random_range(1..=4),
            horizon: rng.random_range(1..=12),
            stationary: rng.random_bool(0.5),
            grid: 0.1,
            cost_max: 1.0,
            sign: CostSign::NonNegative,
            norm_bound: None,
            bias: rng.random_range(-3.0..4.0),
            window: None,
            sparse: false,
        };
        let base = g.generate(i).unwrap();
        let spec = base.with_costs(vec![0.0; base.costs().len()]).unwrap();
        let gamma = 1.0 - sigmoid(-spec.bias());
        let v = planner_value(&spec, &CostLattice::new(0.1).unwrap());
        worst = worst.max((v - discounted_by_hand(&spec, gamma)).abs());
    }
    outcome(worst <= 1e-9, format!("max |V - V_gamma| = {worst:.2e} over 20 zero-cost specs (limit 1e-9)"))
}

// ---------------------------------------------------------------- criterion 6

fn quantization_bound() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let clip = 1.0;
    let mut worst_ratio = 0.0f64;
    let mut worst_clipped = 0.0f64;
    for i in 0..20 {
        let spec = Generator::RandomTermdp {
            states: rng.random_range(1..=2),
            actions: 2,
            horizon: 4,
            stationary: false,
            grid: 0.01,
            cost_max: 1.0,
            sign: CostSign::NonNegative,
            norm_bound: None,
            bias: rng.random_range(0.0..2.0),
            window: None,
            sparse: false,
        }
        .generate(i)
        .unwrap();
        let h = spec.horizon() as f64;
        let v_star = brute_force_optimal(&spec).unwrap().value;
        for dc in [0.05, 0.1, 0.2] {
            let lattice = CostLattice::new(dc).unwrap();
            let table = plan(&spec, &lattice, PlanOptions::default()).unwrap();
            let gap = v_star - brute_force_value(&spec, &Replay(&table)).unwrap();
            worst_ratio = worst_ratio.max(gap / (h.powi(3) * dc / 2.0));
            let clipped = plan(&spec, &lattice.with_clip(clip).unwrap(), PlanOptions::default()).unwrap();
            let gap = v_star - brute_force_value(&spec, &Replay(&clipped)).unwrap();
            worst_clipped = worst_clipped.max(gap / (h.powi(3) * dc / 2.0 + 2.0 * h * h * (-clip).exp()));
        }
    }
    outcome(
        worst_ratio <= 1.0 && worst_clipped <= 1.0,
        format!("largest gap / bound: {worst_ratio:.3} unclipped, {worst_clipped:.3} clipped at C*={clip} (limit 1)"),
    )
}

// ---------------------------------------------------------------- criterion 7

fn residual_by_hand(spec: &TerMdpSpec, table: &AugmentedValueTable, cap: Option<f64>) -> f64 {
    let lattice = table.lattice();
    let clip = lattice.clip_index(spec.bias());
    let mut worst = 0.0f64;
    for (h, range) in table.layers().iter().enumerate().take(spec.horizon()) {
        for s in 0..spec.num_states() {
            for acc in range.lo..=range.hi {
                let mut best = f64::NEG_INFINITY;
                for a in 0..spec.num_actions() {
                    let mut next = acc + (spec.cost(h, s, a) / lattice.resolution() + 1e-9).floor() as i64;
                    if let Some(c) = clip {
                        next = next.min(c);
                    }
                    let survive = sigmoid(spec.bias() - next as f64 * lattice.resolution());
                    let ev: f64 = spec
                        .transition_row(h, s, a)
                        .iter()
                        .enumerate()
                        .map(|(s2, p)| p * table.value(h + 1, s2, next))
                        .sum();
                    let q = spec.reward(h, s, a) + survive * ev;
                    worst = worst.max((table.q_value(h, s, acc, a) - q).abs());
                    best = best.max(q);
                }
                let v = cap.map_or(best, |c| best.min(c));
                worst = worst.max((table.value(h, s, acc) - v).abs());
            }
        }
    }
    worst
}

fn bellman_residual() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut worst = 0.0f64;
    for i in 0..30 {
        let g = Generator::RandomTermdp {
            states: rng.random_range(1..=5),
            actions: rng.random_range(1..=3),
            horizon: rng.random_range(1..=8),
            stationary: rng.random_bool(0.3),
            grid: 0.1,
            cost_max: 1.0,
            sign: CostSign::NonNegative,
            norm_bound: None,
            bias: rng.random_range(-1.0..3.0),
            window: None,
            sparse: false,
        };
        let spec = g.generate(i).unwrap();
        let mut lattice = CostLattice::new([0.1, 0.2, 0.3][i as usize % 3]).unwrap();
        if i % 2 == 1 {
            lattice = lattice.with_clip(1.5).unwrap();
        }
        let clip_values = i % 4 == 3;
        let table = plan(&spec, &lattice, PlanOptions { clip_values }).unwrap();
        let cap = clip_values.then_some(spec.horizon() as f64);
        worst = worst.max(residual_by_hand(&spec, &table, cap));
    }
    outcome(worst <= 1e-10, format!("max Bellman residual {worst:.2e} over 30 tables (limit 1e-10)"))
}

// ---------------------------------------------------------------- criterion 8

fn canonical_chain() -> TerMdpSpec {
    Generator::Chain {
        states: 5,
        horizon: 5,
        bias: 1.5,
    }
    .generate(0)
    .unwrap()
}

fn crl_config(seed: u64, variant: Variant) -> TermCrlConfig {
    TermCrlConfig {
        episodes: 20_000,
        bonus_scale: 0.05,
        radius_mode: RadiusMode::Practical,
        cost_bound: Some(1.0),
        variant,
        seed,
        ..TermCrlConfig::default()
    }
}

fn termcrl_convergence() -> Outcome {
    let spec = canonical_chain();
    let (v_star, _) = termcrl::optimal_value(&spec).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for seed in 1..=3u64 {
        let trace = termcrl::run(&spec, &crl_config(seed, Variant::Optimistic)).unwrap();
        let naive = termcrl::run(&spec, &crl_config(seed, Variant::Naive)).unwrap();
        let tail = trace.tail_mean_regret(1000) / v_star;
        let points: Vec<(f64, f64)> = trace
            .records
            .iter()
            .filter(|r| r.k >= 100 && r.cum_regret > 0.0)
            .map(|r| (r.k as f64, r.cum_regret))
            .collect();
        let exponent = log_log_slope(&points);
        let ratio = naive.cumulative_regret() / trace.cumulative_regret();
        pass &= tail <= 0.05 && exponent < 1.0 && ratio >= 2.0;
        parts.push(format!("seed {seed}: tail {:.2}% exp {exponent:.2} naive x{ratio:.2}", 100.0 * tail));
    }
    outcome(pass, format!("{} (limits 5%, 1, x2)", parts.join("; ")))
}

// ---------------------------------------------------------------- criterion 9

fn optimism_frequency() -> Outcome {
    let mut optimistic = 0usize;
    let mut total = 0usize;
    let mut parts = Vec::new();
    for seed in 0..3u64 {
        let spec = Generator::RandomTermdp {
            states: 2,
            actions: 2,
            horizon: 3,
            stationary: false,
            grid: 0.5,
            cost_max: 1.0,
            sign: CostSign::NonNegative,
            norm_bound: None,
            bias: 1.0,
            window: None,
            sparse: false,
        }
        .generate(seed)
        .unwrap();
        let v_star = brute_force_optimal(&spec).unwrap().value;
        let config = TermCrlConfig {
            episodes: 400,
            delta: 0.1,
            resolution: 0.5,
            bonus_scale: 1.0,
            radius_mode: RadiusMode::Theory,
            seed,
            ..TermCrlConfig::default()
        };
        let trace = termcrl::run(&spec, &config).unwrap();
        let hits = trace.optimistic_values.iter().filter(|&&v| v >= v_star - 1e-9).count();
        parts.push(format!("{hits}/{}", trace.optimistic_values.len()));
        optimistic += hits;
        total += trace.optimistic_values.len();
    }
    let freq = optimistic as f64 / total as f64;
    outcome(freq >= 0.9, format!("V_bar >= V* in {:.1}% of episodes ({}) (limit 90%)", 100.0 * freq, parts.join(", ")))
}

// ---------------------------------------------------------------- criterion 10

fn trajectory_strategy() -> impl Strategy<Value = (Trajectory, usize, usize)> {
    (1usize..12, 1usize..15, any::<bool>()).prop_flat_map(|(horizon, window, terminated)| {
        let len = if terminated { 1..=horizon } else { horizon..=horizon };
        len.prop_flat_map(move |len| {
            (prop::collection::vec((0usize..4, 0usize..3), len), Just(horizon), Just(window), Just(terminated))
        })
        .prop_map(|(steps, horizon, window, terminated)| {
            let len = steps.len();
            let traj = Trajectory {
                states: steps.iter().map(|p| p.0).collect(),
                actions: steps.iter().map(|p| p.1).collect(),
                rewards: vec![0.0; len],
                termination_time: terminated.then_some(len),
                accumulated_costs: vec![0.0; len],
            };
            (traj, horizon, window)
        })
    })
}

fn window_bookkeeping() -> Outcome {
    let mut runner = TestRunner::new(PropConfig {
        cases: 2000,
        failure_persistence: None,
        ..PropConfig::default()
    });
    let result = runner.run(&trajectory_strategy(), |(traj, horizon, window)| {
        let ex = split_windows(&traj, window).unwrap();
        let positives = ex.iter().filter(|e| e.label == 1).count();
        let negatives = ex.len() - positives;
        match traj.termination_time {
            Some(t) => {
                prop_assert_eq!(positives, 1);
                prop_assert_eq!(negatives, t - 1);
                prop_assert_eq!(ex.last().unwrap().label, 1);
            }
            None => {
                prop_assert_eq!(positives, 0);
                prop_assert_eq!(negatives, horizon);
            }
        }
        for (l, e) in ex.iter().enumerate() {
            let end = l + 1;
            let start = end.saturating_sub(window);
            let want: Vec<(usize, usize)> = (start..end).map(|t| (traj.states[t], traj.actions[t])).collect();
            prop_assert_eq!(&e.steps, &want);
        }
        Ok(())
    });
    match result {
        Ok(()) => outcome(true, "2000 random trajectories split with exact counts and windows".into()),
        Err(e) => outcome(false, format!("counterexample: {e}")),
    }
}

// ---------------------------------------------------------------- criterion 11

fn gridworld(seed: u64) -> TerMdpSpec {
    Generator::GridworldCoins {
        width: 5,
        length: 5,
        horizon: 30,
        window: 10,
        bias: 6.0,
    }
    .generate(seed)
    .unwrap()
}

fn termpg_improvement() -> Outcome {
    let arms: Vec<(&str, PgVariant, Option<usize>)> = vec![
        ("plain", PgVariant::Plain, None),
        ("naive", PgVariant::Naive, None),
        ("no-optimism", PgVariant::NoOptimism, None),
        ("no-dyn-discount", PgVariant::NoDynamicDiscount, None),
        ("window x0.5", PgVariant::Plain, Some(5)),
        ("window x2", PgVariant::Plain, Some(20)),
    ];
    let jobs: Vec<(usize, u64)> = (0..arms.len()).flat_map(|i| (0..5u64).map(move |s| (i, s))).collect();
    let results: Vec<(usize, f64)> = jobs
        .par_iter()
        .map(|&(i, seed)| {
            let config = TermPgConfig {
                iterations: 200,
                rollouts_per_iteration: 32,
                variant: arms[i].1,
                window: arms[i].2,
                seed,
                ..TermPgConfig::default()
            };
            (i, termpg::run(&gridworld(seed), &config).unwrap().tail_mean_return(20))
        })
        .collect();
    let mean = |i: usize| results.iter().filter(|r| r.0 == i).map(|r| r.1).sum::<f64>() / 5.0;
    let m: Vec<f64> = (0..arms.len()).map(mean).collect();
    let ratio = m[0] / m[1];
    let degrade = |i: usize| (m[0] - m[i]) / m[0];
    let checks = [
        ratio >= 1.5,
        m[2] < m[0],
        m[3] < m[0],
        degrade(4) < 0.25,
        degrade(5) < 0.25,
    ];
    let scores: Vec<String> = arms.iter().zip(&m).map(|(a, v)| format!("{} {v:.2}", a.0)).collect();
    outcome(
        checks.iter().all(|&c| c),
        format!(
            "last-20 mean return: {}; plain/naive {ratio:.2} (limit 1.5); checks [ratio, no-opt<plain, no-dyn<plain, x0.5, x2] = {:?}",
            scores.join(", "),
            checks
        ),
    )
}

// ---------------------------------------------------------------- criterion 12

fn every_output(seed: u64, dir: &std::path::Path) -> Vec<(String, String)> {
    let gen = Generator::RandomTermdp {
        states: 2,
        actions: 2,
        horizon: 3,
        stationary: false,
        grid: 0.1,
        cost_max: 1.0,
        sign: CostSign::NonNegative,
        norm_bound: None,
        bias: 1.0,
        window: None,
        sparse: false,
    };
    let spec = gen.generate(seed).unwrap();
    let trajs = commands::uniform_trajectories(&spec, 200, seed).unwrap();
    let parsed = commands::parse_trajectories(&trajs).unwrap();
    let est = commands::estimate(&spec, &parsed, Some(&spec), &EstimateRequest::default()).unwrap();
    let planned = commands::plan_spec(&spec, &PlanRequest::default()).unwrap();
    let crl = termcrl::run(
        &spec,
        &TermCrlConfig {
            episodes: 50,
            seed,
            ..TermCrlConfig::default()
        },
    )
    .unwrap();
    let grid = Generator::GridworldCoins {
        width: 3,
        length: 3,
        horizon: 6,
        window: 3,
        bias: 2.0,
    }
    .generate(seed)
    .unwrap();
    let pg = termpg::run(
        &grid,
        &TermPgConfig {
            iterations: 4,
            rollouts_per_iteration: 4,
            seed,
            ..TermPgConfig::default()
        },
    )
    .unwrap();
    let eval = commands::evaluate_policy(&spec, "optimal", EvalMethod::MonteCarlo, 500, None, seed).unwrap();
    let eval_csv = termdp::harness::schema::write_csv(&[eval], &termdp::harness::schema::EVAL).unwrap();
    let oracle = brute_force_optimal(&spec).unwrap().to_json().unwrap();
    let config = ExperimentConfig::from_toml(&format!(
        r#"
[env]
generator = {{ family = "chain", states = 3, horizon = 3 }}

[algorithm]
name = "termcrl"
variants = ["optimistic", "naive"]
seeds = [{seed}, {}]

[algorithm.termcrl]
episodes = 30

[output]
dir = "{}"
"#,
        seed + 1,
        dir.display()
    ))
    .unwrap();
    let manifest = termdp::harness::run_experiment(&config, 1).unwrap();
    let mut out = vec![
        ("gen spec".to_string(), spec.to_json().unwrap()),
        ("gen trajectories".into(), trajs),
        ("estimate".into(), est.csv().unwrap()),
        ("plan".into(), planned.csv().unwrap()),
        ("termcrl".into(), crl.to_csv().unwrap()),
        ("termpg".into(), pg.to_csv().unwrap()),
        ("eval".into(), eval_csv),
        ("oracle".into(), oracle),
        ("run aggregate".into(), manifest.aggregate.clone()),
    ];
    for r in &manifest.runs {
        let csv = r.csv.as_deref().expect("run succeeded");
        out.push((format!("run {csv}"), std::fs::read_to_string(dir.join(csv)).unwrap()));
    }
    out
}

fn determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = every_output(5, a.path());
    let second = every_output(5, b.path());
    let differing: Vec<&str> = first
        .iter()
        .zip(&second)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    let other = every_output(6, tempfile::tempdir().unwrap().path());
    let seed_matters = first.iter().zip(&other).any(|(x, y)| x.1 != y.1);
    outcome(
        differing.is_empty() && first.len() == second.len() && seed_matters,
        format!("{} outputs compared, differing: {:?}; a new seed changes output: {seed_matters}", first.len(), differing),
    )
}

fn main() {
    let criteria: [(usize, &str, Check, Duration); 12] = [
        (1, "mle gradient", gradient_exactness, Duration::from_secs(10)),
        (2, "cost recovery", cost_recovery, Duration::from_secs(120)),
        (3, "confidence coverage", confidence_coverage, Duration::from_secs(300)),
        (4, "augmented sufficiency", augmented_sufficiency, Duration::from_secs(30)),
        (5, "discounted reduction", discounted_reduction, Duration::from_secs(10)),
        (6, "quantization bound", quantization_bound, Duration::from_secs(60)),
        (7, "bellman residual", bellman_residual, Duration::from_secs(60)),
        (8, "termcrl convergence", termcrl_convergence, Duration::from_secs(300)),
        (9, "optimism frequency", optimism_frequency, Duration::from_secs(120)),
        (10, "window bookkeeping", window_bookkeeping, Duration::from_secs(60)),
        (11, "termpg improvement", termpg_improvement, Duration::from_secs(600)),
        (12, "determinism", determinism, Duration::from_secs(120)),
    ];
    let only: Vec<usize> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for (n, name, check, budget) in criteria {
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let started = Instant::now();
        let result = check();
        let took = started.elapsed();
        let in_time = took <= budget;
        let pass = result.pass && in_time;
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {n} {} {name}: {} ({:.1}s, budget {}s{})",
            if pass { "PASS" } else { "FAIL" },
            result.detail,
            took.as_secs_f64(),
            budget.as_secs(),
            if in_time { "" } else { ", over budget" }
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
