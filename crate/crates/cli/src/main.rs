//! Command-line front end: generate environments, fit costs, plan, learn, evaluate
//! and run seeded experiments.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use termdp::estimator::RadiusMode;
use termdp::harness::commands::{self, EstimateRequest, EvalMethod, PlanRequest};
use termdp::harness::schema::{self, write_csv};
use termdp::harness::{run_experiment, verify_replay, ExperimentConfig, Generator};
use termdp::model::TerMdpSpec;
use termdp::oracle::brute_force_optimal;
use termdp::termcrl::{self, RefitSchedule, TermCrlConfig, Variant};
use termdp::termpg::{self, PgVariant, TermPgConfig};
use termdp::{Result, TermdpError};

#[derive(Parser)]
#[command(name = "termdp", version, about = "Tabular MDPs with history-dependent logistic termination")]
struct Cli {
    /// Seed of every random choice (default 0; for `run`, replaces the config's seed list).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for `run`.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Directory for outputs without an explicit path.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a spec JSON, optionally with uniform-policy trajectories.
    Gen(GenArgs),
    /// Fit costs from a trajectory log.
    Estimate(EstimateArgs),
    /// Plan on the cost-augmented state space.
    Plan(PlanArgs),
    /// Optimistic model-based learning with regret tracking.
    Termcrl(TermcrlArgs),
    /// Tabular policy gradient with a bootstrap cost ensemble.
    Termpg(TermpgArgs),
    /// Evaluate a policy exactly or by Monte Carlo.
    Eval(EvalArgs),
    /// Brute-force optimum of a tiny spec.
    Oracle(OracleArgs),
    /// Run a multi-seed experiment from a TOML config, or replay a manifest.
    Run(RunArgs),
}

#[derive(Args)]
struct GenArgs {
    /// random-termdp, chain or gridworld-coins.
    family: String,
    /// Generator parameter as key=value (repeatable), e.g. --param states=5.
    #[arg(long = "param", value_parser = parse_kv)]
    params: Vec<(String, String)>,
    /// Also write this many uniform-policy episodes as JSON lines.
    #[arg(long)]
    trajectories: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    spec: PathBuf,
    /// JSON-lines trajectory log.
    #[arg(long)]
    trajectories: PathBuf,
    /// True spec for the error columns; without it they are NaN.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    norm_bound: Option<f64>,
    #[arg(long)]
    estimate_bias: bool,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, value_enum, default_value_t = Mode::Theory)]
    radius_mode: Mode,
    #[arg(long, default_value_t = 1.0)]
    radius_scale: f64,
    /// Per-entry cost bound for κ (defaults to the norm bound).
    #[arg(long)]
    cost_bound: Option<f64>,
    /// CSV path; the JSON estimate goes next to it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Theory,
    Practical,
}

impl From<Mode> for RadiusMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Theory => RadiusMode::Theory,
            Mode::Practical => RadiusMode::Practical,
        }
    }
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Lattice resolution Δc.
    #[arg(long)]
    dc: Option<f64>,
    /// Clip level C* of the accumulated cost.
    #[arg(long)]
    clip: Option<f64>,
    /// Derive Δc (and C* with --clipped) from a target accuracy.
    #[arg(long, conflicts_with = "dc")]
    epsilon: Option<f64>,
    #[arg(long, requires = "epsilon")]
    clipped: bool,
    /// Cap values at H (optimistic planning).
    #[arg(long)]
    clip_values: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TermcrlArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long = "episodes", short = 'K', default_value_t = 1000)]
    episodes: usize,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    dc: f64,
    #[arg(long, default_value_t = 1.0)]
    bonus_scale: f64,
    #[arg(long, value_enum, default_value_t = Mode::Theory)]
    radius_mode: Mode,
    #[arg(long)]
    cost_bound: Option<f64>,
    #[arg(long)]
    estimate_bias: bool,
    /// Ignore the terminator (costs fixed at zero).
    #[arg(long)]
    naive: bool,
    #[arg(long, value_enum, default_value_t = Refit::Auto)]
    refit: Refit,
    /// Record per-episode wall time (output is then not reproducible).
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Refit {
    Auto,
    Every,
    Doubling,
}

#[derive(Args)]
struct TermpgArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long = "ensemble", default_value_t = 3)]
    ensemble: usize,
    #[arg(long, default_value_t = 32)]
    rollouts: usize,
    #[arg(long, default_value_t = 200)]
    iters: usize,
    #[arg(long, default_value_t = 0.5)]
    lr: f64,
    #[arg(long, default_value_t = 1000)]
    buffer: usize,
    /// plain, rs:p, penalty:alpha, naive, no-optimism, no-dyn-discount or std:alpha.
    #[arg(long, default_value = "plain")]
    variant: String,
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    spec: PathBuf,
    /// optimal, uniform or constant:<action>.
    #[arg(long, default_value = "optimal")]
    policy: String,
    #[arg(long, value_enum, default_value_t = Method::Exact)]
    method: Method,
    #[arg(long, default_value_t = 10_000)]
    episodes: usize,
    /// Planning resolution for the optimal policy (defaults to the spec's cost grid, else 0.1).
    #[arg(long)]
    dc: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Exact,
    MonteCarlo,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, required_unless_present = "verify")]
    config: Option<PathBuf>,
    /// Manifest to replay; outputs go to --out-dir.
    #[arg(long, conflicts_with = "config")]
    verify: Option<PathBuf>,
}

fn parse_kv(s: &str) -> std::result::Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| format!("expected key=value, got {s:?}"))
}

fn read_spec(path: &Path) -> Result<TerMdpSpec> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| TermdpError::Config(format!("cannot read {}: {e}", path.display())))?;
    TerMdpSpec::from_json(&text)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

struct Ctx {
    seed: u64,
    out_dir: PathBuf,
    format: Format,
}

impl Ctx {
    fn target(&self, out: &Option<PathBuf>, stem: &str) -> PathBuf {
        out.clone().unwrap_or_else(|| {
            let ext = match self.format {
                Format::Csv => "csv",
                Format::Json => "json",
            };
            self.out_dir.join(format!("{stem}.{ext}"))
        })
    }

    /// Writes records as CSV or a JSON array, depending on --format.
    fn emit<T: Serialize>(&self, path: &Path, csv: &str, records: &[T]) -> Result<()> {
        match self.format {
            Format::Csv => write_file(path, csv),
            Format::Json => write_file(path, &serde_json::to_string_pretty(records)?),
        }
    }
}

fn gen(ctx: &Ctx, a: &GenArgs) -> Result<()> {
    let mut map = serde_json::Map::new();
    map.insert("family".into(), a.family.clone().into());
    for (k, v) in &a.params {
        let value = serde_json::from_str(v).unwrap_or_else(|_| serde_json::Value::String(v.clone()));
        map.insert(k.replace('-', "_"), value);
    }
    let generator: Generator =
        serde_json::from_value(map.into()).map_err(|e| TermdpError::Config(format!("bad generator parameters: {e}")))?;
    let spec = generator.generate(ctx.seed)?;
    let path = a.out.clone().unwrap_or_else(|| ctx.out_dir.join("spec.json"));
    write_file(&path, &spec.to_json()?)?;
    println!("wrote {}", path.display());
    if let Some(n) = a.trajectories {
        let lines = commands::uniform_trajectories(&spec, n, ctx.seed)?;
        let tpath = path.with_file_name("trajectories.jsonl");
        write_file(&tpath, &lines)?;
        println!("wrote {}", tpath.display());
    }
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| TermdpError::Config(format!("cannot read {}: {e}", path.display())))
}

fn estimate(ctx: &Ctx, a: &EstimateArgs) -> Result<()> {
    let spec = read_spec(&a.spec)?;
    let truth = a.truth.as_deref().map(read_spec).transpose()?;
    let trajs = commands::parse_trajectories(&read_text(&a.trajectories)?)?;
    let req = EstimateRequest {
        window: a.window,
        lambda: a.lambda,
        norm_bound: a.norm_bound,
        estimate_bias: a.estimate_bias,
        delta: a.delta,
        radius_mode: a.radius_mode.into(),
        radius_scale: a.radius_scale,
        cost_bound: a.cost_bound,
    };
    let out = commands::estimate(&spec, &trajs, truth.as_ref(), &req)?;
    let path = a.out.clone().unwrap_or_else(|| ctx.out_dir.join("estimate.csv"));
    write_file(&path, &out.csv()?)?;
    let jpath = path.with_extension("json");
    write_file(&jpath, &serde_json::to_string_pretty(&out)?)?;
    println!(
        "fitted {} coordinates from {} episodes in {} iterations; wrote {} and {}",
        out.c_hat.len(),
        trajs.len(),
        out.iterations,
        path.display(),
        jpath.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    let ctx = Ctx {
        seed: cli.seed.unwrap_or(0),
        out_dir: cli.out_dir.clone(),
        format: cli.format,
    };
    match &cli.command {
        Command::Gen(a) => gen(&ctx, a)?,
        Command::Estimate(a) => estimate(&ctx, a)?,
        Command::Plan(a) => plan_cmd(&ctx, a)?,
        Command::Termcrl(a) => termcrl_cmd(&ctx, a)?,
        Command::Termpg(a) => termpg_cmd(&ctx, a)?,
        Command::Eval(a) => eval_cmd(&ctx, a)?,
        Command::Oracle(a) => oracle_cmd(&ctx, a)?,
        Command::Run(a) => return run_cmd(&cli, a),
    }
    Ok(0)
}

fn plan_cmd(ctx: &Ctx, a: &PlanArgs) -> Result<()> {
    let spec = read_spec(&a.spec)?;
    let req = PlanRequest {
        dc: a.dc,
        clip: a.clip,
        epsilon: a.epsilon,
        clipped: a.clipped,
        clip_values: a.clip_values,
    };
    let started = Instant::now();
    let out = commands::plan_spec(&spec, &req)?;
    let path = ctx.target(&a.out, "plan");
    // windowed specs have no table; their rows are empty and only the summary says anything
    ctx.emit(&path, &out.csv()?, &out.rows)?;
    println!(
        "V1={} bins={} backups={} dc={} wall_ms={:.1}",
        out.initial_value,
        out.max_bins,
        out.backups,
        out.resolution,
        started.elapsed().as_secs_f64() * 1e3
    );
    Ok(())
}

fn termcrl_cmd(ctx: &Ctx, a: &TermcrlArgs) -> Result<()> {
    let spec = read_spec(&a.spec)?;
    let config = TermCrlConfig {
        episodes: a.episodes,
        delta: a.delta,
        lambda: a.lambda,
        resolution: a.dc,
        bonus_scale: a.bonus_scale,
        radius_mode: a.radius_mode.into(),
        estimate_bias: a.estimate_bias,
        variant: if a.naive { Variant::Naive } else { Variant::Optimistic },
        refit: match a.refit {
            Refit::Auto => RefitSchedule::Auto,
            Refit::Every => RefitSchedule::EveryEpisode,
            Refit::Doubling => RefitSchedule::Doubling,
        },
        cost_bound: a.cost_bound,
        timing: a.timing,
        seed: ctx.seed,
    };
    let trace = termcrl::run(&spec, &config)?;
    let path = ctx.target(&a.out, "termcrl");
    ctx.emit(&path, &trace.to_csv()?, &trace.records)?;
    println!(
        "K={} cumulative_regret={} wrote {}",
        a.episodes,
        trace.cumulative_regret(),
        path.display()
    );
    Ok(())
}

fn termpg_cmd(ctx: &Ctx, a: &TermpgArgs) -> Result<()> {
    let spec = read_spec(&a.spec)?;
    let variant: PgVariant = a.variant.parse().map_err(|e: TermdpError| TermdpError::Config(e.to_string()))?;
    let config = TermPgConfig {
        iterations: a.iters,
        rollouts_per_iteration: a.rollouts,
        variant,
        ensemble_members: a.ensemble,
        buffer_capacity: a.buffer,
        window: a.window,
        learning_rate: a.lr,
        timing: a.timing,
        seed: ctx.seed,
        ..TermPgConfig::default()
    };
    let trace = termpg::run(&spec, &config)?;
    let path = ctx.target(&a.out, "termpg");
    ctx.emit(&path, &trace.to_csv()?, &trace.records)?;
    println!(
        "iterations={} final_mean_return={} wrote {}",
        a.iters,
        trace.records.last().map_or(f64::NAN, |r| r.mean_return),
        path.display()
    );
    Ok(())
}

fn eval_cmd(ctx: &Ctx, a: &EvalArgs) -> Result<()> {
    let spec = read_spec(&a.spec)?;
    let method = match a.method {
        Method::Exact => EvalMethod::Exact,
        Method::MonteCarlo => EvalMethod::MonteCarlo,
    };
    let row = commands::evaluate_policy(&spec, &a.policy, method, a.episodes, a.dc, ctx.seed)?;
    println!("value={} std_error={}", row.value, row.std_error);
    let rows = vec![row];
    let path = ctx.target(&a.out, "eval");
    ctx.emit(&path, &write_csv(&rows, &schema::EVAL)?, &rows)?;
    Ok(())
}

fn oracle_cmd(ctx: &Ctx, a: &OracleArgs) -> Result<()> {
    let spec = read_spec(&a.spec)?;
    let opt = brute_force_optimal(&spec)?;
    let path = a.out.clone().unwrap_or_else(|| ctx.out_dir.join("oracle.json"));
    write_file(&path, &opt.to_json()?)?;
    println!("V*={} wrote {}", opt.value, path.display());
    Ok(())
}

fn run_cmd(cli: &Cli, a: &RunArgs) -> Result<i32> {
    if let Some(manifest) = &a.verify {
        let report = verify_replay(manifest, &cli.out_dir, cli.jobs)?;
        if !report.hash_matches {
            eprintln!("config hash does not match the manifest");
            return Ok(2);
        }
        if !report.ok() {
            eprintln!("replay differs: {:?}", report.mismatches);
            return Ok(1);
        }
        println!("replay reproduced every output");
        return Ok(0);
    }
    let path = a.config.as_ref().expect("clap requires --config without --verify");
    let mut config = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        config.algorithm.seeds = vec![seed];
    }
    if cli.out_dir != Path::new(".") {
        config.output.dir = cli.out_dir.clone();
    }
    let manifest = run_experiment(&config, cli.jobs)?;
    for f in manifest.failures() {
        eprintln!(
            "{} seed {} failed: {}",
            f.label,
            f.seed,
            f.error.as_deref().unwrap_or("unknown error")
        );
    }
    println!(
        "{} runs, {} failed; results in {}",
        manifest.runs.len(),
        manifest.failures().count(),
        config.output.dir.display()
    );
    Ok(manifest.exit_code())
}
