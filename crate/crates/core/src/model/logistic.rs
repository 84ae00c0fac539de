//! Logistic link and the termination probability built on it.

use crate::error::{Result, TermdpError};

/// Numerically stable logistic function for finite inputs.
#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(x))` without overflow.
#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `log ρ(x)`.
#[inline]
pub(crate) fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

/// `log(1 - ρ(x))`.
#[inline]
pub(crate) fn log_one_minus_sigmoid(x: f64) -> f64 {
    -softplus(x)
}

/// `ρ(x) = 1 / (1 + e^{-x})`.
pub fn logistic(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(TermdpError::invalid(format!("logistic of non-finite input {x}")));
    }
    Ok(sigmoid(x))
}

/// Probability that the terminator stops the episode given the (window) accumulated cost.
pub fn termination_probability(accumulated_cost: f64, bias: f64) -> Result<f64> {
    if !accumulated_cost.is_finite() || !bias.is_finite() {
        return Err(TermdpError::invalid(format!(
            "termination probability of non-finite arguments ({accumulated_cost}, {bias})"
        )));
    }
    logistic(accumulated_cost - bias)
}

/// Maximal reciprocal derivative of the logistic function over reachable cost sums.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Kappa(f64);

impl Kappa {
    /// Bounds κ through the largest possible logit magnitude `H * c_max + |b|`.
    ///
    /// `1 / (ρ(x)(1 - ρ(x))) = e^x + 2 + e^-x`, which is minimized at zero and grows with `|x|`.
    pub fn from_cost_bound(horizon: usize, c_max: f64, bias: f64) -> Result<Self> {
        if !(c_max.is_finite() && c_max >= 0.0 && bias.is_finite()) {
            return Err(TermdpError::invalid("kappa requires finite c_max >= 0 and finite bias"));
        }
        let x = horizon as f64 * c_max + bias.abs();
        let value = x.exp() + 2.0 + (-x).exp();
        if !value.is_finite() {
            return Err(TermdpError::NumericFailure(format!(
                "kappa overflows for logit bound {x}"
            )));
        }
        Ok(Kappa(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logistic_reference_points() {
        assert_eq!(logistic(0.0).unwrap(), 0.5);
        let expected = 1.0 / (1.0 + 6f64.exp());
        assert!((logistic(-6.0).unwrap() - expected).abs() < 1e-18);
        assert!((expected - 2.4726e-3).abs() < 1e-7);
        for x in [-700.0, -30.0, -1.3, 0.2, 5.0, 700.0] {
            let sum = logistic(x).unwrap() + logistic(-x).unwrap();
            assert!((sum - 1.0).abs() < 1e-15, "x = {x}");
        }
        assert!(logistic(-700.0).unwrap() > 0.0);
    }

    #[test]
    fn logistic_rejects_non_finite() {
        assert!(logistic(f64::NAN).is_err());
        assert!(logistic(f64::INFINITY).is_err());
        assert!(termination_probability(f64::NEG_INFINITY, 0.0).is_err());
    }

    #[test]
    fn termination_probability_cases() {
        assert_eq!(termination_probability(0.0, 0.0).unwrap(), 0.5);
        for b in [-3.0, 0.0, 2.5, 6.0] {
            assert_eq!(termination_probability(b, b).unwrap(), 0.5);
        }
        let p = termination_probability(0.0, 6.0).unwrap();
        assert!((p - 2.4726e-3).abs() < 1e-7);
        let mut last = 0.0;
        for i in -50..50 {
            let p = termination_probability(i as f64 * 0.3, 1.0).unwrap();
            assert!(p > last);
            last = p;
        }
    }

    #[test]
    fn log_terms_match_direct_evaluation() {
        for x in [-20.0, -2.0, 0.0, 0.7, 15.0] {
            let p = sigmoid(x);
            assert!((log_sigmoid(x) - p.ln()).abs() < 1e-12);
            assert!((log_one_minus_sigmoid(x) - (1.0 - p).ln()).abs() < 1e-9);
        }
        assert!(log_one_minus_sigmoid(800.0).is_finite());
    }

    #[test]
    fn kappa_is_at_least_four() {
        assert_eq!(Kappa::from_cost_bound(3, 0.0, 0.0).unwrap().value(), 4.0);
        let k = Kappa::from_cost_bound(4, 0.5, 6.0).unwrap().value();
        let rho = sigmoid(8.0);
        assert!((k - 1.0 / (rho * (1.0 - rho))).abs() / k < 1e-9);
    }
}
