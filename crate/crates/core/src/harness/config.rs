//! Experiment files: a TOML document with `[env]`, `[algorithm]` and `[output]` tables.
//!
//! ```toml
//! [env]
//! generator = { family = "gridworld-coins", width = 5, length = 5 }
//!
//! [algorithm]
//! name = "termpg"
//! variants = ["plain", "naive"]
//! seeds = [1, 2, 3, 4, 5]
//!
//! [algorithm.termpg]
//! iterations = 200
//!
//! [output]
//! dir = "results/coins"
//! ```

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Generator;
use crate::error::{Result, TermdpError};
use crate::model::TerMdpSpec;
use crate::termcrl::{TermCrlConfig, Variant};
use crate::termpg::{PgVariant, TermPgConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    /// Spec JSON file; relative paths resolve against the config file's directory.
    pub file: Option<PathBuf>,
    pub generator: Option<Generator>,
    /// Generator seed shared by all runs; when absent each run seed also seeds its
    /// environment, so variants stay paired.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgorithmName {
    Termcrl,
    Termpg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmConfig {
    pub name: AlgorithmName,
    #[serde(default)]
    pub variants: Vec<String>,
    /// Extra runs of the first variant with the agent's window scaled by each factor
    /// (policy gradient only).
    #[serde(default)]
    pub window_scales: Vec<f64>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub termcrl: TermCrlConfig,
    #[serde(default)]
    pub termpg: TermPgConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
}

fn default_dir() -> PathBuf {
    PathBuf::from("results")
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: default_dir() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    pub algorithm: AlgorithmConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// One labeled line of the experiment: a variant, possibly with a scaled window.
#[derive(Debug, Clone, PartialEq)]
pub struct RunPlan {
    pub label: String,
    pub algorithm: PlannedAlgorithm,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlannedAlgorithm {
    Termcrl(TermCrlConfig),
    Termpg { config: TermPgConfig, window_scale: Option<f64> },
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| TermdpError::Config(e.to_string()))
    }

    /// Reads a config file and resolves a relative spec path against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| TermdpError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config = Self::from_toml(&text)?;
        if let (Some(file), Some(dir)) = (&config.env.file, path.parent()) {
            if file.is_relative() {
                config.env.file = Some(dir.join(file));
            }
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| TermdpError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.env.file, &self.env.generator) {
            (Some(f), None) => {
                if !f.is_file() {
                    return Err(TermdpError::Config(format!("spec file {} does not exist", f.display())));
                }
            }
            (None, Some(_)) => {}
            _ => return Err(TermdpError::Config("[env] needs exactly one of `file` or `generator`".into())),
        }
        if self.algorithm.seeds.is_empty() {
            return Err(TermdpError::Config("at least one seed is required".into()));
        }
        let distinct: HashSet<u64> = self.algorithm.seeds.iter().copied().collect();
        if distinct.len() != self.algorithm.seeds.len() {
            return Err(TermdpError::Config("seeds must be distinct".into()));
        }
        if self.algorithm.window_scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(TermdpError::Config("window scales must be positive".into()));
        }
        if self.algorithm.name == AlgorithmName::Termcrl && !self.algorithm.window_scales.is_empty() {
            return Err(TermdpError::Config("window scales apply to the policy-gradient learner only".into()));
        }
        let runs = self.runs()?;
        let labels: HashSet<&str> = runs.iter().map(|r| r.label.as_str()).collect();
        if labels.len() != runs.len() {
            return Err(TermdpError::Config("variant labels must be distinct".into()));
        }
        Ok(())
    }

    /// Expands variants and window scales into labeled runs.
    pub fn runs(&self) -> Result<Vec<RunPlan>> {
        let a = &self.algorithm;
        let mut out = Vec::new();
        match a.name {
            AlgorithmName::Termcrl => {
                let variants = if a.variants.is_empty() { vec!["optimistic".to_string()] } else { a.variants.clone() };
                for v in variants {
                    let variant = match v.as_str() {
                        "optimistic" => Variant::Optimistic,
                        "naive" => Variant::Naive,
                        _ => return Err(TermdpError::Config(format!("unknown termcrl variant {v:?}"))),
                    };
                    out.push(RunPlan {
                        label: v,
                        algorithm: PlannedAlgorithm::Termcrl(TermCrlConfig { variant, ..a.termcrl.clone() }),
                    });
                }
            }
            AlgorithmName::Termpg => {
                let variants = if a.variants.is_empty() { vec!["plain".to_string()] } else { a.variants.clone() };
                let mut first = None;
                for v in &variants {
                    let variant: PgVariant = v.parse().map_err(|e: TermdpError| TermdpError::Config(e.to_string()))?;
                    let config = TermPgConfig { variant, ..a.termpg.clone() };
                    first.get_or_insert_with(|| (variant.to_string(), config.clone()));
                    out.push(RunPlan {
                        label: variant.to_string(),
                        algorithm: PlannedAlgorithm::Termpg { config, window_scale: None },
                    });
                }
                if let Some((name, config)) = first {
                    for &scale in &a.window_scales {
                        out.push(RunPlan {
                            label: format!("{name}-window-x{scale}"),
                            algorithm: PlannedAlgorithm::Termpg {
                                config: config.clone(),
                                window_scale: Some(scale),
                            },
                        });
                    }
                }
            }
        }
        Ok(out)
    }

    /// Environment of one run seed.
    pub fn spec_for(&self, seed: u64) -> Result<TerMdpSpec> {
        match (&self.env.file, &self.env.generator) {
            (Some(f), _) => {
                let text = std::fs::read_to_string(f)
                    .map_err(|e| TermdpError::Config(format!("cannot read {}: {e}", f.display())))?;
                TerMdpSpec::from_json(&text)
            }
            (None, Some(g)) => g.generate(self.env.seed.unwrap_or(seed)),
            (None, None) => Err(TermdpError::Config("[env] needs `file` or `generator`".into())),
        }
    }

    /// SHA-256 over the environment and algorithm tables (and the spec file's bytes);
    /// output locations do not enter.
    pub fn input_hash(&self) -> Result<String> {
        let mut h = Sha256::new();
        let env = EnvConfig {
            file: self.env.file.as_ref().map(|f| PathBuf::from(f.file_name().unwrap_or_default())),
            ..self.env.clone()
        };
        h.update(serde_json::to_vec(&env)?);
        h.update(serde_json::to_vec(&self.algorithm)?);
        if let Some(f) = &self.env.file {
            h.update(std::fs::read(f)?);
        }
        Ok(hex(&h.finalize()))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    const COINS: &str = r#"
[env]
generator = { family = "gridworld-coins", width = 3, length = 3, horizon = 6, window = 3 }

[algorithm]
name = "termpg"
variants = ["plain", "naive"]
window_scales = [0.5, 2.0]
seeds = [1, 2]

[algorithm.termpg]
iterations = 3
rollouts_per_iteration = 4
"#;

    #[test]
    fn parses_and_expands_runs() {
        let c = ExperimentConfig::from_toml(COINS).unwrap();
        c.validate().unwrap();
        let labels: Vec<String> = c.runs().unwrap().into_iter().map(|r| r.label).collect();
        assert_eq!(labels, vec!["plain", "naive", "plain-window-x0.5", "plain-window-x2"]);
        assert_eq!(c.output.dir, PathBuf::from("results"));
        assert_eq!(c.algorithm.termpg.iterations, 3);
        assert_eq!(c.algorithm.termpg.ensemble_members, 3);
        let again = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn rejects_bad_configs() {
        let dup = COINS.replace("seeds = [1, 2]", "seeds = [1, 1]");
        assert!(ExperimentConfig::from_toml(&dup).unwrap().validate().is_err());
        let unknown = COINS.replace("\"naive\"", "\"greedy\"");
        assert!(ExperimentConfig::from_toml(&unknown).unwrap().validate().is_err());
        assert!(ExperimentConfig::from_toml(&format!("{COINS}\n[extra]\nx = 1\n")).is_err());
        let missing = COINS.replace("generator = ", "gen = ");
        assert!(ExperimentConfig::from_toml(&missing).is_err());
    }

    #[test]
    fn hash_ignores_output_dir() {
        let a = ExperimentConfig::from_toml(COINS).unwrap();
        let mut b = a.clone();
        b.output.dir = PathBuf::from("elsewhere");
        assert_eq!(a.input_hash().unwrap(), b.input_hash().unwrap());
        b.algorithm.seeds.push(9);
        assert_ne!(a.input_hash().unwrap(), b.input_hash().unwrap());
    }
}
