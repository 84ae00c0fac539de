//! Local confidence radii for the fitted costs.

use serde::{Deserialize, Serialize};

use super::dataset::CoordinateMap;
use crate::error::{Result, TermdpError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RadiusMode {
    /// The full bound, constants included.
    #[default]
    Theory,
    /// Same `n` dependence and log factor, dimension constants dropped:
    /// `√κ · log(...) / √(n + λ-term)`. The theory constants never shrink below the
    /// cost scale at desk-sized episode budgets.
    Practical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusParams {
    pub kappa: f64,
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub norm_bound: f64,
    pub delta: f64,
    pub episode: usize,
    pub scale: f64,
    pub mode: RadiusMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceRadii {
    pub radius: Vec<f64>,
    pub coords: CoordinateMap,
    pub params: RadiusParams,
}

impl RadiusParams {
    fn check(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(TermdpError::invalid("kappa must be positive"));
        }
        if self.num_states == 0 || self.num_actions == 0 || self.horizon == 0 {
            return Err(TermdpError::invalid("S, A, H must be positive"));
        }
        if !(self.norm_bound >= 0.0 && self.norm_bound.is_finite()) {
            return Err(TermdpError::invalid("norm bound must be non-negative"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(TermdpError::invalid("delta must lie in (0, 1)"));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(TermdpError::invalid("scale must be positive"));
        }
        Ok(())
    }

    /// `4SAH / (L√H + 0.5)`, the additive term that keeps the radius finite at `n = 0`.
    pub fn regularizer_term(&self) -> f64 {
        let d = (self.num_states * self.num_actions * self.horizon) as f64;
        4.0 * d / (self.norm_bound * (self.horizon as f64).sqrt() + 0.5)
    }

    /// `log(16/δ · (1 + k(L+0.5) / (16 S²A² √H)))`, squared in theory mode.
    pub fn log_factor(&self) -> f64 {
        let (s, a) = (self.num_states as f64, self.num_actions as f64);
        let k = self.episode as f64;
        let inner = 1.0 + k * (self.norm_bound + 0.5) / (16.0 * s * s * a * a * (self.horizon as f64).sqrt());
        (16.0 / self.delta * inner).ln()
    }

    /// Everything in the numerator, scale included.
    pub fn numerator(&self) -> f64 {
        let log = self.log_factor();
        let base = match self.mode {
            RadiusMode::Theory => {
                let d = (self.num_states * self.num_actions) as f64 * (self.horizon as f64).powf(2.5);
                24.0 * (self.kappa * d).sqrt() * (self.norm_bound + 1.0).powf(1.5) * log * log
            }
            RadiusMode::Practical => self.kappa.sqrt() * log,
        };
        self.scale * base
    }

    pub fn radius_at(&self, n: u64) -> f64 {
        radius_from_parts(self.numerator(), n as f64, self.regularizer_term())
    }
}

/// `numerator / √(n + reg)`.
pub fn radius_from_parts(numerator: f64, n: f64, reg: f64) -> f64 {
    numerator / (n + reg).sqrt()
}

/// Radius per coordinate for the given visit counts.
pub fn confidence_radius(counts: &[u64], coords: CoordinateMap, params: RadiusParams) -> Result<ConfidenceRadii> {
    params.check()?;
    if counts.len() != coords.dim() {
        return Err(TermdpError::invalid("counts do not match the coordinate map"));
    }
    let numerator = params.numerator();
    let reg = params.regularizer_term();
    let radius = counts.iter().map(|&n| radius_from_parts(numerator, n as f64, reg)).collect();
    Ok(ConfidenceRadii { radius, coords, params })
}
