//! Regularized cross-entropy of the termination signals and its exact gradient.

use super::dataset::TerminationDataset;
use crate::error::{Result, TermdpError};
use crate::model::{log_one_minus_sigmoid, log_sigmoid, sigmoid};

fn check_inputs(data: &TerminationDataset, c: &[f64], bias: f64, lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(TermdpError::invalid(format!("lambda must be positive, got {lambda}")));
    }
    if c.len() != data.coords().dim() {
        return Err(TermdpError::invalid(format!(
            "cost vector has {} entries, dataset expects {}",
            c.len(),
            data.coords().dim()
        )));
    }
    if !bias.is_finite() || c.iter().any(|x| !x.is_finite()) {
        return Err(TermdpError::invalid("non-finite cost or bias"));
    }
    Ok(())
}

/// `Σ y log ρ(⟨d,c⟩ - b) + (1 - y) log(1 - ρ(⟨d,c⟩ - b)) - λ‖c‖²`.
pub fn log_likelihood(data: &TerminationDataset, c: &[f64], bias: f64, lambda: f64) -> Result<f64> {
    check_inputs(data, c, bias, lambda)?;
    let mut total = 0.0;
    for row in data.rows() {
        let z = row.visits.dot(c) - bias;
        if row.positives > 0.0 {
            total += row.positives * log_sigmoid(z);
        }
        if row.negatives > 0.0 {
            total += row.negatives * log_one_minus_sigmoid(z);
        }
    }
    Ok(total - lambda * c.iter().map(|x| x * x).sum::<f64>())
}

/// `Σ (y - ρ(⟨d,c⟩ - b)) d - 2λc`.
pub fn gradient(data: &TerminationDataset, c: &[f64], bias: f64, lambda: f64) -> Result<Vec<f64>> {
    check_inputs(data, c, bias, lambda)?;
    let mut grad: Vec<f64> = c.iter().map(|x| -2.0 * lambda * x).collect();
    for row in data.rows() {
        let z = row.visits.dot(c) - bias;
        let residual = row.positives - (row.positives + row.negatives) * sigmoid(z);
        for &(i, m) in row.visits.entries() {
            grad[i] += residual * m as f64;
        }
    }
    Ok(grad)
}

/// Derivative of the log likelihood with respect to the bias `b`.
pub fn bias_derivative(data: &TerminationDataset, c: &[f64], bias: f64) -> Result<f64> {
    check_inputs(data, c, bias, 1.0)?;
    Ok(data
        .rows()
        .iter()
        .map(|row| {
            let z = row.visits.dot(c) - bias;
            -(row.positives - (row.positives + row.negatives) * sigmoid(z))
        })
        .sum())
}
