//! Runs every (variant, seed) pair of a config, writes per-seed and aggregate CSVs and
//! a manifest, and replays a manifest to check that results reproduce.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{sha256_hex, AlgorithmName, ExperimentConfig, PlannedAlgorithm, RunPlan};
use crate::error::{Result, TermdpError};
use crate::termcrl::{self, RegretRecord};
use crate::termpg::{self, PgRecord, TermPgConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub label: String,
    pub seed: u64,
    /// Path relative to the output directory; absent when the run failed.
    pub csv: Option<String>,
    pub sha256: Option<String>,
    pub error: Option<String>,
    /// Exit code class of the failure (see the CLI docs).
    pub exit_code: Option<i32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub version: String,
    pub wall_ms: f64,
    pub config: ExperimentConfig,
    pub runs: Vec<RunEntry>,
    pub aggregate: String,
    pub aggregate_sha256: String,
}

impl Manifest {
    pub fn failures(&self) -> impl Iterator<Item = &RunEntry> {
        self.runs.iter().filter(|r| r.error.is_some())
    }

    /// Exit code of the first failed run, 0 if all succeeded.
    pub fn exit_code(&self) -> i32 {
        self.failures().next().and_then(|r| r.exit_code).unwrap_or(0)
    }
}

enum Records {
    Crl(Vec<RegretRecord>),
    Pg(Vec<PgRecord>),
}

fn run_one(config: &ExperimentConfig, plan: &RunPlan, seed: u64) -> Result<(String, Records)> {
    let spec = config.spec_for(seed)?;
    match &plan.algorithm {
        PlannedAlgorithm::Termcrl(c) => {
            let trace = termcrl::run(&spec, &termcrl::TermCrlConfig { seed, ..c.clone() })?;
            Ok((trace.to_csv()?, Records::Crl(trace.records)))
        }
        PlannedAlgorithm::Termpg { config: c, window_scale } => {
            let base = c.window.unwrap_or(spec.window());
            let window = window_scale.map(|s| ((base as f64 * s).round() as usize).max(1)).or(c.window);
            let trace = termpg::run(&spec, &TermPgConfig { seed, window, ..c.clone() })?;
            Ok((trace.to_csv()?, Records::Pg(trace.records)))
        }
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

/// One row per (iteration, variant), variants in config order; std is the sample
/// standard deviation across successful seeds.
fn aggregate(name: AlgorithmName, labels: &[String], results: &[(usize, Records)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    match name {
        AlgorithmName::Termcrl => w.write_record(super::schema::AGGREGATE_TERMCRL.header())?,
        AlgorithmName::Termpg => w.write_record(super::schema::AGGREGATE_TERMPG.header())?,
    }
    let len = results
        .iter()
        .map(|(_, r)| match r {
            Records::Crl(v) => v.len(),
            Records::Pg(v) => v.len(),
        })
        .max()
        .unwrap_or(0);
    for i in 0..len {
        for (li, label) in labels.iter().enumerate() {
            let runs: Vec<&Records> = results.iter().filter(|(l, _)| *l == li).map(|(_, r)| r).collect();
            let mut cols: [Vec<f64>; 3] = Default::default();
            let mut step = None;
            for r in runs {
                match r {
                    Records::Crl(v) => {
                        if let Some(rec) = v.get(i) {
                            step = Some(rec.k);
                            cols[0].push(rec.regret);
                            cols[1].push(rec.cum_regret);
                            cols[2].push(rec.cost_l2_err);
                        }
                    }
                    Records::Pg(v) => {
                        if let Some(rec) = v.get(i) {
                            step = Some(rec.iter);
                            cols[0].push(rec.mean_return);
                            cols[1].push(rec.term_rate);
                            cols[2].push(rec.cost_l2_err);
                        }
                    }
                }
            }
            let Some(step) = step else { continue };
            let mut row = vec![label.clone(), step.to_string(), cols[0].len().to_string()];
            for c in &cols {
                let (m, s) = mean_std(c);
                row.push(m.to_string());
                row.push(s.to_string());
            }
            w.write_record(&row)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| TermdpError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Runs all (variant, seed) pairs on a pool of `jobs` workers and writes results
/// under the config's output directory. Failed runs are recorded in the manifest;
/// check [`Manifest::exit_code`].
pub fn run_experiment(config: &ExperimentConfig, jobs: usize) -> Result<Manifest> {
    config.validate()?;
    let started = Instant::now();
    let plans = config.runs()?;
    let labels: Vec<String> = plans.iter().map(|p| p.label.clone()).collect();
    let tasks: Vec<(usize, u64)> = (0..plans.len())
        .flat_map(|li| config.algorithm.seeds.iter().map(move |&s| (li, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| TermdpError::Config(format!("cannot start worker pool: {e}")))?;
    let outcomes: Vec<Result<(String, Records)>> =
        pool.install(|| tasks.par_iter().map(|&(li, seed)| run_one(config, &plans[li], seed)).collect());

    let dir = &config.output.dir;
    let mut entries = Vec::with_capacity(tasks.len());
    let mut good = Vec::new();
    for (&(li, seed), outcome) in tasks.iter().zip(outcomes) {
        let label = &labels[li];
        match outcome {
            Ok((csv, records)) => {
                let rel = format!("{label}/seed-{seed}.csv");
                write(&dir.join(&rel), &csv)?;
                entries.push(RunEntry {
                    label: label.clone(),
                    seed,
                    csv: Some(rel),
                    sha256: Some(sha256_hex(csv.as_bytes())),
                    error: None,
                    exit_code: None,
                });
                good.push((li, records));
            }
            Err(e) => entries.push(RunEntry {
                label: label.clone(),
                seed,
                csv: None,
                sha256: None,
                exit_code: Some(e.exit_code()),
                error: Some(e.to_string()),
            }),
        }
    }
    let agg = aggregate(config.algorithm.name, &labels, &good)?;
    write(&dir.join("aggregate.csv"), &agg)?;
    let manifest = Manifest {
        config_hash: config.input_hash()?,
        version: env!("CARGO_PKG_VERSION").to_string(),
        wall_ms: started.elapsed().as_secs_f64() * 1e3,
        config: config.clone(),
        runs: entries,
        aggregate: "aggregate.csv".into(),
        aggregate_sha256: sha256_hex(agg.as_bytes()),
    };
    write(&dir.join("manifest.json"), &serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub hash_matches: bool,
    /// Runs whose CSV differs (or whose success state changed) on replay.
    pub mismatches: Vec<String>,
    pub aggregate_matches: bool,
}

impl ReplayReport {
    pub fn ok(&self) -> bool {
        self.hash_matches && self.mismatches.is_empty() && self.aggregate_matches
    }
}

/// Checks the manifest's config hash, reruns the experiment into `scratch_dir`, and
/// compares every CSV digest. A hash mismatch stops before rerunning.
pub fn verify_replay(manifest_path: &Path, scratch_dir: &Path, jobs: usize) -> Result<ReplayReport> {
    let text = std::fs::read_to_string(manifest_path)?;
    let recorded: Manifest = serde_json::from_str(&text)?;
    let mut config = recorded.config.clone();
    if config.input_hash()? != recorded.config_hash {
        return Ok(ReplayReport {
            hash_matches: false,
            mismatches: Vec::new(),
            aggregate_matches: false,
        });
    }
    config.output.dir = PathBuf::from(scratch_dir);
    let fresh = run_experiment(&config, jobs)?;
    let mismatches = recorded
        .runs
        .iter()
        .zip(&fresh.runs)
        .filter(|(a, b)| a.label != b.label || a.seed != b.seed || a.sha256 != b.sha256)
        .map(|(a, _)| format!("{}/seed-{}", a.label, a.seed))
        .collect();
    Ok(ReplayReport {
        hash_matches: true,
        mismatches,
        aggregate_matches: recorded.aggregate_sha256 == fresh.aggregate_sha256,
    })
}
