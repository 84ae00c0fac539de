//! The accumulated-cost grid.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TermdpError};

/// Tolerance (in grid units) within which a value counts as already on the lattice.
const ON_GRID: f64 = 1e-7;

/// Accumulated costs are stored as integer multiples of `resolution`. With a clip
/// threshold `C*` every sum at or above `C* + b` is represented by the clip bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostLattice {
    resolution: f64,
    clip: Option<f64>,
}

impl CostLattice {
    pub fn new(resolution: f64) -> Result<Self> {
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(TermdpError::invalid(format!("lattice resolution must be positive, got {resolution}")));
        }
        Ok(CostLattice { resolution, clip: None })
    }

    pub fn with_clip(mut self, clip: f64) -> Result<Self> {
        if !(clip > 0.0 && clip.is_finite()) {
            return Err(TermdpError::invalid("clip threshold must be positive"));
        }
        self.clip = Some(clip);
        Ok(self)
    }

    /// `Δc = 2ε/H³` unclipped; `Δc = ε/H³` and `C* = log(4H²/ε)` clipped.
    pub fn from_epsilon(epsilon: f64, horizon: usize, clipped: bool) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) || horizon == 0 {
            return Err(TermdpError::invalid("epsilon and horizon must be positive"));
        }
        let h = horizon as f64;
        if clipped {
            CostLattice::new(epsilon / h.powi(3))?.with_clip((4.0 * h * h / epsilon).ln())
        } else {
            CostLattice::new(2.0 * epsilon / h.powi(3))
        }
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn clip(&self) -> Option<f64> {
        self.clip
    }

    /// `⌊c/Δc⌋`, treating values within rounding of a lattice point as on it.
    pub fn floor_index(&self, c: f64) -> i64 {
        let q = c / self.resolution;
        let r = q.round();
        if (q - r).abs() <= ON_GRID {
            r as i64
        } else {
            q.floor() as i64
        }
    }

    pub fn value(&self, index: i64) -> f64 {
        index as f64 * self.resolution
    }

    /// Index of the clip bin for bias `b`: the smallest lattice point at or above `C* + b`.
    pub fn clip_index(&self, bias: f64) -> Option<i64> {
        self.clip.map(|c| {
            let q = (c + bias) / self.resolution;
            let r = q.round();
            let idx = if (q - r).abs() <= ON_GRID { r } else { q.ceil() };
            (idx as i64).max(0)
        })
    }

    /// Number of bins a clipped lattice can occupy.
    pub fn clipped_bins(&self, bias: f64) -> Option<usize> {
        self.clip_index(bias).map(|i| i as usize + 1)
    }
}

/// `c_q = ⌊c/Δc⌋Δc` entrywise.
pub fn quantize_costs(costs: &[f64], resolution: f64) -> Result<Vec<f64>> {
    let lattice = CostLattice::new(resolution)?;
    if costs.iter().any(|c| !c.is_finite()) {
        return Err(TermdpError::invalid("costs must be finite"));
    }
    Ok(costs.iter().map(|&c| lattice.value(lattice.floor_index(c))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floors() {
        let q = quantize_costs(&[0.37, 0.3, -0.05, 0.7, 1.0], 0.1).unwrap();
        let expect = [0.3, 0.3, -0.1, 0.7, 1.0];
        for (a, b) in q.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn never_rounds_up() {
        let lattice = CostLattice::new(0.05).unwrap();
        for i in -200..200 {
            let c = i as f64 * 0.0137;
            assert!(lattice.value(lattice.floor_index(c)) <= c + 1e-9);
        }
    }

    #[test]
    fn epsilon_choices() {
        let l = CostLattice::from_epsilon(0.5, 4, false).unwrap();
        assert!((l.resolution() - 1.0 / 64.0).abs() < 1e-15);
        let l = CostLattice::from_epsilon(0.5, 4, true).unwrap();
        assert!((l.resolution() - 0.5 / 64.0).abs() < 1e-15);
        assert!((l.clip().unwrap() - 128f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn clip_bins() {
        let l = CostLattice::new(0.5).unwrap().with_clip(2.0).unwrap();
        assert_eq!(l.clipped_bins(1.0), Some(7));
        let l = CostLattice::new(0.4).unwrap().with_clip(2.0).unwrap();
        assert_eq!(l.clip_index(0.0), Some(5));
    }

    #[test]
    fn rejects_bad_resolution() {
        assert!(CostLattice::new(0.0).is_err());
        assert!(quantize_costs(&[1.0], -0.1).is_err());
    }
}
