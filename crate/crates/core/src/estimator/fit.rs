//! Maximum likelihood fit of the cost vector on the L2 ball `‖c‖ ≤ L`.
//!
//! The objective is concave. Each solve is a damped Newton ascent with backtracking.
//! When the unconstrained maximizer leaves the ball, the KKT multiplier `μ` of the
//! norm constraint is found by bisection: the constrained optimum is the maximizer of
//! the same objective with ridge weight `λ + μ` whose norm equals `L`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::dataset::{AggregatedRow, CoordinateMap, TerminationDataset};
use super::likelihood::log_likelihood;
use crate::error::{Result, TermdpError};
use crate::model::{log_one_minus_sigmoid, log_sigmoid, sigmoid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BiasMode {
    /// The terminator's bias is known and enters the logit as a fixed offset.
    Known(f64),
    /// An extra intercept coordinate is fitted; it is kept out of the norm ball.
    Estimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub lambda: f64,
    pub norm_bound: f64,
    pub bias: BiasMode,
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Ridge on the intercept in estimate mode; keeps the maximizer finite when the
    /// data holds no terminations at all.
    pub bias_ridge: f64,
    pub warm_start: Option<(Vec<f64>, Option<f64>)>,
}

impl FitOptions {
    pub fn new(lambda: f64, norm_bound: f64, bias: BiasMode) -> Self {
        FitOptions {
            lambda,
            norm_bound,
            bias,
            tolerance: 1e-8,
            max_iterations: 10_000,
            bias_ridge: 1e-4,
            warm_start: None,
        }
    }

    pub fn with_warm_start(mut self, estimate: &CostEstimate) -> Self {
        self.warm_start = Some((estimate.c_hat.clone(), estimate.bias_hat));
        self
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }
}

/// `λ = SAH / (L √H + 0.5)`.
pub fn recommended_lambda(num_states: usize, num_actions: usize, horizon: usize, norm_bound: f64) -> f64 {
    let d = (num_states * num_actions * horizon) as f64;
    d / (norm_bound * (horizon as f64).sqrt() + 0.5)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub coords: CoordinateMap,
    pub c_hat: Vec<f64>,
    /// Fitted bias (estimate mode only).
    pub bias_hat: Option<f64>,
    pub counts: Vec<u64>,
    pub lambda: f64,
    pub objective_value: f64,
    pub iterations: usize,
    /// Sup norm of the gradient of the Lagrangian at the returned point.
    pub gradient_norm: f64,
    pub projection_active: bool,
}

impl CostEstimate {
    /// Bias used in the logit: the fitted one, or `fallback` in known-bias mode.
    pub fn bias_or(&self, fallback: f64) -> f64 {
        self.bias_hat.unwrap_or(fallback)
    }
}

struct Problem<'a> {
    rows: &'a [AggregatedRow],
    dim: usize,
    ridge: f64,
    bias: BiasMode,
    bias_ridge: f64,
}

impl Problem<'_> {
    fn params(&self) -> usize {
        self.dim + usize::from(matches!(self.bias, BiasMode::Estimate))
    }

    #[inline]
    fn offset(&self, theta: &[f64]) -> f64 {
        match self.bias {
            BiasMode::Known(b) => -b,
            BiasMode::Estimate => theta[self.dim],
        }
    }

    fn penalty(&self, theta: &[f64]) -> f64 {
        let mut p = self.ridge * theta[..self.dim].iter().map(|x| x * x).sum::<f64>();
        if let BiasMode::Estimate = self.bias {
            p += self.bias_ridge * theta[self.dim] * theta[self.dim];
        }
        p
    }

    fn value(&self, theta: &[f64]) -> f64 {
        let offset = self.offset(theta);
        let mut total = 0.0;
        for row in self.rows {
            let z = row.visits.dot(&theta[..self.dim]) + offset;
            if row.positives > 0.0 {
                total += row.positives * log_sigmoid(z);
            }
            if row.negatives > 0.0 {
                total += row.negatives * log_one_minus_sigmoid(z);
            }
        }
        total - self.penalty(theta)
    }

    /// Gradient and negated Hessian (positive definite).
    fn derivatives(&self, theta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let p = self.params();
        let estimate = matches!(self.bias, BiasMode::Estimate);
        let offset = self.offset(theta);
        let mut grad = vec![0.0; p];
        let mut neg_hess = vec![0.0; p * p];
        for row in self.rows {
            let z = row.visits.dot(&theta[..self.dim]) + offset;
            let n = row.positives + row.negatives;
            let rho = sigmoid(z);
            let residual = row.positives - n * rho;
            let weight = n * rho * (1.0 - rho);
            let entries = row.visits.entries();
            for (k, &(i, mi)) in entries.iter().enumerate() {
                let xi = mi as f64;
                grad[i] += residual * xi;
                for &(j, mj) in &entries[k..] {
                    neg_hess[i * p + j] += weight * xi * mj as f64;
                }
                if estimate {
                    neg_hess[i * p + self.dim] += weight * xi;
                }
            }
            if estimate {
                grad[self.dim] += residual;
                neg_hess[self.dim * p + self.dim] += weight;
            }
        }
        for i in 0..self.dim {
            grad[i] -= 2.0 * self.ridge * theta[i];
            neg_hess[i * p + i] += 2.0 * self.ridge;
        }
        if estimate {
            grad[self.dim] -= 2.0 * self.bias_ridge * theta[self.dim];
            neg_hess[self.dim * p + self.dim] += 2.0 * self.bias_ridge;
        }
        for i in 0..p {
            for j in 0..i {
                neg_hess[i * p + j] = neg_hess[j * p + i];
            }
        }
        (grad, neg_hess)
    }
}

struct Solver {
    tolerance: f64,
    max_iterations: usize,
    iterations: usize,
}

impl Solver {
    /// Newton ascent from `theta` until the gradient sup norm drops below tolerance.
    fn maximize(&mut self, problem: &Problem<'_>, theta: &mut Vec<f64>) -> Result<f64> {
        let p = problem.params();
        loop {
            let (grad, neg_hess) = problem.derivatives(theta);
            let gnorm = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
            if gnorm <= self.tolerance {
                return Ok(gnorm);
            }
            if self.iterations >= self.max_iterations {
                return Err(TermdpError::Convergence {
                    iterations: self.iterations,
                    gradient_norm: gnorm,
                    last_iterate: theta.clone(),
                    context: None,
                });
            }
            self.iterations += 1;
            let direction = newton_direction(&neg_hess, &grad, p)?;
            let slope: f64 = grad.iter().zip(&direction).map(|(g, d)| g * d).sum();
            let f0 = problem.value(theta);
            let slack = 1e-13 * f0.abs().max(1.0);
            let mut t = 1.0;
            let mut candidate = vec![0.0; p];
            let accepted = loop {
                for k in 0..p {
                    candidate[k] = theta[k] + t * direction[k];
                }
                let f = problem.value(&candidate);
                if f.is_finite() && f >= f0 + 1e-4 * t * slope - slack {
                    break true;
                }
                t *= 0.5;
                if t < 1e-14 {
                    break false;
                }
            };
            if !accepted {
                // No representable ascent left: the point is optimal up to rounding.
                if gnorm <= self.tolerance.max(1e-12) * 1e4 {
                    return Ok(gnorm);
                }
                return Err(TermdpError::Convergence {
                    iterations: self.iterations,
                    gradient_norm: gnorm,
                    last_iterate: theta.clone(),
                    context: Some("line search stalled".into()),
                });
            }
            std::mem::swap(theta, &mut candidate);
        }
    }
}

fn newton_direction(neg_hess: &[f64], grad: &[f64], p: usize) -> Result<Vec<f64>> {
    let mut jitter = 0.0;
    for _ in 0..8 {
        let mut m = DMatrix::from_row_slice(p, p, neg_hess);
        if jitter > 0.0 {
            for i in 0..p {
                m[(i, i)] += jitter;
            }
        }
        if let Some(chol) = m.cholesky() {
            let d = chol.solve(&DVector::from_column_slice(grad));
            if d.iter().all(|x| x.is_finite()) {
                return Ok(d.as_slice().to_vec());
            }
        }
        jitter = if jitter == 0.0 { 1e-10 } else { jitter * 100.0 };
    }
    Err(TermdpError::NumericFailure(
        "negative Hessian of the likelihood is not positive definite".into(),
    ))
}

fn norm(c: &[f64]) -> f64 {
    c.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Fits `ĉ ∈ argmax_{‖c‖ ≤ L} L_λ(c)`.
pub fn fit_mle(data: &TerminationDataset, options: &FitOptions) -> Result<CostEstimate> {
    let coords = data.coords();
    let dim = coords.dim();
    let FitOptions {
        lambda,
        norm_bound,
        bias,
        tolerance,
        max_iterations,
        bias_ridge,
        ..
    } = *options;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(TermdpError::invalid("lambda must be positive"));
    }
    if !(norm_bound >= 0.0 && norm_bound.is_finite()) {
        return Err(TermdpError::invalid("norm bound must be non-negative"));
    }
    if let BiasMode::Known(b) = bias {
        if !b.is_finite() {
            return Err(TermdpError::invalid("known bias must be finite"));
        }
    }
    let estimate = matches!(bias, BiasMode::Estimate);
    let mut theta = vec![0.0; dim + usize::from(estimate)];
    if let Some((c0, b0)) = &options.warm_start {
        if c0.len() == dim {
            theta[..dim].copy_from_slice(c0);
        }
        if let (true, Some(b)) = (estimate, b0) {
            theta[dim] = -b;
        }
    }
    let mut solver = Solver {
        tolerance,
        max_iterations,
        iterations: 0,
    };
    let mut problem = Problem {
        rows: data.rows(),
        dim,
        ridge: lambda,
        bias,
        bias_ridge,
    };

    let mut projection_active = false;
    let mut gradient_norm;
    if norm_bound == 0.0 {
        theta[..dim].iter_mut().for_each(|x| *x = 0.0);
        projection_active = data.rows().iter().any(|r| r.positives > 0.0) || estimate;
        gradient_norm = if estimate {
            // only the intercept is free
            problem.ridge = lambda * 1e12;
            solver.maximize(&problem, &mut theta)?
        } else {
            0.0
        };
    } else {
        if norm(&theta[..dim]) > norm_bound {
            let s = norm_bound / norm(&theta[..dim]);
            theta[..dim].iter_mut().for_each(|x| *x *= s);
        }
        gradient_norm = solver.maximize(&problem, &mut theta)?;
        if norm(&theta[..dim]) > norm_bound * (1.0 + 1e-12) {
            projection_active = true;
            let mut lo = 0.0;
            let mut hi = lambda.max(1e-3);
            let mut hi_theta = theta.clone();
            loop {
                problem.ridge = lambda + hi;
                gradient_norm = solver.maximize(&problem, &mut hi_theta)?;
                if norm(&hi_theta[..dim]) <= norm_bound {
                    break;
                }
                lo = hi;
                hi *= 4.0;
            }
            theta = hi_theta.clone();
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                problem.ridge = lambda + mid;
                let mut trial = theta.clone();
                let g = solver.maximize(&problem, &mut trial)?;
                let n = norm(&trial[..dim]);
                if n > norm_bound {
                    lo = mid;
                } else {
                    hi = mid;
                    theta = trial;
                    gradient_norm = g;
                }
                if (n - norm_bound).abs() <= 1e-10 * norm_bound.max(1.0) || hi - lo <= 1e-15 * hi {
                    break;
                }
            }
            let n = norm(&theta[..dim]);
            if n > norm_bound {
                let s = norm_bound / n;
                theta[..dim].iter_mut().for_each(|x| *x *= s);
            }
        }
    }

    let c_hat = theta[..dim].to_vec();
    let bias_hat = estimate.then(|| -theta[dim]);
    let objective_value = log_likelihood(data, &c_hat, bias_hat.unwrap_or(match bias {
        BiasMode::Known(b) => b,
        BiasMode::Estimate => 0.0,
    }), lambda)?;
    Ok(CostEstimate {
        coords,
        c_hat,
        bias_hat,
        counts: data.counts().to_vec(),
        lambda,
        objective_value,
        iterations: solver.iterations,
        gradient_norm,
        projection_active,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::dataset::VisitVector;
    use crate::estimator::likelihood::gradient;

    fn single_coordinate(pos: usize, neg: usize) -> TerminationDataset {
        let mut d = TerminationDataset::new(CoordinateMap::new(1, 2, 2, true), 1).unwrap();
        let examples = (0..pos)
            .map(|_| (VisitVector::from_coords([0]), 1))
            .chain((0..neg).map(|_| (VisitVector::from_coords([0]), 0)));
        d.push_examples(examples).unwrap();
        d
    }

    #[test]
    fn empty_dataset_gives_zero() {
        let d = TerminationDataset::new(CoordinateMap::new(2, 2, 3, false), 3).unwrap();
        let est = fit_mle(&d, &FitOptions::new(1.0, 2.0, BiasMode::Known(1.0))).unwrap();
        assert!(est.c_hat.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn logit_inversion() {
        // p̂ = 0.3 with b = 1: maximizer → logit(0.3) + 1 as λ → 0
        let d = single_coordinate(300, 700);
        let est = fit_mle(&d, &FitOptions::new(1e-9, 10.0, BiasMode::Known(1.0))).unwrap();
        let expected = (0.3f64 / 0.7).ln() + 1.0;
        assert!((est.c_hat[0] - expected).abs() < 1e-6, "{} vs {expected}", est.c_hat[0]);
        assert_eq!(est.c_hat[1], 0.0);
        assert!(!est.projection_active);
    }

    #[test]
    fn stationarity_at_optimum() {
        let d = single_coordinate(30, 70);
        let est = fit_mle(&d, &FitOptions::new(0.5, 10.0, BiasMode::Known(-0.2))).unwrap();
        let g = gradient(&d, &est.c_hat, -0.2, 0.5).unwrap();
        assert!(g.iter().all(|x| x.abs() <= 1e-8));
    }

    #[test]
    fn ball_constraint_binds() {
        let d = single_coordinate(990, 10);
        let est = fit_mle(&d, &FitOptions::new(1e-6, 0.5, BiasMode::Known(0.0))).unwrap();
        assert!(est.projection_active);
        let n = est.c_hat.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(n <= 0.5 + 1e-12 && n > 0.5 - 1e-8);
        assert!(est.c_hat[0] > 0.0);
    }

    #[test]
    fn estimate_bias_tracks_base_rate() {
        // only the intercept sees variation when the coordinate is heavily regularized
        let d = single_coordinate(200, 800);
        let est = fit_mle(&d, &FitOptions::new(1e6, 10.0, BiasMode::Estimate)).unwrap();
        let b = est.bias_hat.unwrap();
        assert!(est.c_hat[0].abs() < 1e-3);
        assert!((-b - (0.25f64).ln()).abs() < 1e-2);
    }

    #[test]
    fn warm_start_reaches_same_point() {
        let d = single_coordinate(40, 60);
        let opts = FitOptions::new(0.1, 10.0, BiasMode::Known(0.5));
        let cold = fit_mle(&d, &opts).unwrap();
        let warm = fit_mle(&d, &opts.clone().with_warm_start(&cold)).unwrap();
        assert!((cold.c_hat[0] - warm.c_hat[0]).abs() < 1e-9);
        assert!(warm.iterations <= 1);
    }

    #[test]
    fn iteration_cap_reports_convergence_failure() {
        let d = single_coordinate(40, 60);
        let mut opts = FitOptions::new(0.1, 10.0, BiasMode::Known(0.5));
        opts.max_iterations = 0;
        match fit_mle(&d, &opts) {
            Err(TermdpError::Convergence { last_iterate, .. }) => assert_eq!(last_iterate.len(), 2),
            other => panic!("expected convergence failure, got {other:?}"),
        }
    }

    #[test]
    fn recommended_lambda_formula() {
        assert!((recommended_lambda(3, 2, 4, 1.0) - 24.0 / 2.5).abs() < 1e-12);
    }
}
