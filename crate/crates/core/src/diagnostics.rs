//! Convergence diagnostics built on the inner product g(θ)ᵀ d̄(θ).
//!
//! The solution set the iterates are guaranteed to approach is
//! H = {θ : g(θ)ᵀ d̄(θ) = 0}, so both the downhill check and the convergence
//! check work directly in that quantity.

use crate::direction::{SearchDirection, StateSampler};
use crate::param::ParameterVector;
use crate::rng::{StreamRng, LANE_DIAGNOSTIC};
use crate::runner::Trajectory;
use crate::vecops;

/// Exact evaluation of the risk ℓ, its gradient g, and the expected search
/// direction d̄ for a concrete algorithm instance.
///
/// `expected_direction` must be computed by enumeration of the algorithm's
/// own sampling distribution, not assumed equal to −g; the equality of the
/// two is exactly what the downhill diagnostics measure.
pub trait RiskEvaluator {
    fn loss(&self, theta: &ParameterVector) -> f64;
    fn grad(&self, theta: &ParameterVector) -> Vec<f64>;
    fn expected_direction(&self, theta: &ParameterVector) -> Vec<f64>;

    /// g(θ)ᵀ d̄(θ).
    fn inner_product(&self, theta: &ParameterVector) -> f64 {
        vecops::dot(&self.grad(theta), &self.expected_direction(theta))
    }
}

/// A [`RiskEvaluator`] assembled from closures.
pub struct ExactEvaluator {
    loss: Box<dyn Fn(&ParameterVector) -> f64>,
    grad: Box<dyn Fn(&ParameterVector) -> Vec<f64>>,
    expected_direction: Box<dyn Fn(&ParameterVector) -> Vec<f64>>,
}

impl ExactEvaluator {
    pub fn new(
        loss: impl Fn(&ParameterVector) -> f64 + 'static,
        grad: impl Fn(&ParameterVector) -> Vec<f64> + 'static,
        expected_direction: impl Fn(&ParameterVector) -> Vec<f64> + 'static,
    ) -> Self {
        Self {
            loss: Box::new(loss),
            grad: Box::new(grad),
            expected_direction: Box::new(expected_direction),
        }
    }
}

impl RiskEvaluator for ExactEvaluator {
    fn loss(&self, theta: &ParameterVector) -> f64 {
        (self.loss)(theta)
    }
    fn grad(&self, theta: &ParameterVector) -> Vec<f64> {
        (self.grad)(theta)
    }
    fn expected_direction(&self, theta: &ParameterVector) -> Vec<f64> {
        (self.expected_direction)(theta)
    }
}

/// d̄(θ) = Σ_x d(x, θ) p_x(x | θ) when the sampler's support is enumerable.
pub fn expected_direction_exact(
    direction: &dyn SearchDirection,
    sampler: &dyn StateSampler,
    theta: &ParameterVector,
) -> Option<Vec<f64>> {
    let support = sampler.enumerate(theta)?;
    let mut acc = vec![0.0; theta.dim()];
    for (x, p) in &support {
        vecops::add_scaled(&mut acc, *p, &direction.eval(x, theta));
    }
    Some(acc)
}

/// The downhill condition measured at one grid point.
#[derive(Clone, Debug)]
pub struct DownhillReport {
    pub theta: ParameterVector,
    /// g(θ)ᵀ d̄(θ) by full enumeration, when the sampler is enumerable.
    pub exact: Option<f64>,
    /// Monte Carlo mean of g(θ)ᵀ d(x̃, θ).
    pub mc_estimate: Option<f64>,
    /// Standard error of the Monte Carlo mean (needs n_mc ≥ 2).
    pub mc_std_error: Option<f64>,
}

/// Measures g(θ)ᵀ d̄(θ) on a grid of parameter points.
///
/// Exact mode runs whenever the sampler exposes its support; Monte Carlo mode
/// runs when `n_mc ≥ 1`, with one diagnostic stream per grid point.
pub fn check_downhill(
    direction: &dyn SearchDirection,
    sampler: &dyn StateSampler,
    grad_fn: &dyn Fn(&ParameterVector) -> Vec<f64>,
    grid: &[ParameterVector],
    n_mc: usize,
    seed: u64,
) -> Vec<DownhillReport> {
    let streams = StreamRng::new(seed);
    grid.iter()
        .enumerate()
        .map(|(i, theta)| {
            let g = grad_fn(theta);
            let exact = expected_direction_exact(direction, sampler, theta)
                .map(|dbar| vecops::dot(&g, &dbar));
            let (mc_estimate, mc_std_error) = if n_mc >= 1 {
                let mut rng = streams.stream(i as u64, LANE_DIAGNOSTIC);
                let mut sum = 0.0;
                let mut sum_sq = 0.0;
                for _ in 0..n_mc {
                    let x = sampler.sample(theta, &mut rng);
                    let v = vecops::dot(&g, &direction.eval(&x, theta));
                    sum += v;
                    sum_sq += v * v;
                }
                let n = n_mc as f64;
                let mean = sum / n;
                let se = if n_mc >= 2 {
                    let var = (sum_sq - n * mean * mean) / (n - 1.0);
                    Some((var.max(0.0) / n).sqrt())
                } else {
                    None
                };
                (Some(mean), se)
            } else {
                (None, None)
            };
            DownhillReport {
                theta: theta.clone(),
                exact,
                mc_estimate,
                mc_std_error,
            }
        })
        .collect()
}

/// Outcome of the tolerance-based membership test for the solution set H.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvergenceReport {
    pub converged: bool,
    pub final_inner_product: f64,
}

/// converged ⇔ |g(θ_final)ᵀ d̄(θ_final)| < tol.
///
/// Convergence to H is an asymptotic guarantee (t → ∞); a finite-time
/// tolerance rule is the practical stand-in.
pub fn check_convergence_to_h(
    trajectory: &Trajectory,
    evaluator: &dyn RiskEvaluator,
    tol: f64,
) -> ConvergenceReport {
    let ip = evaluator.inner_product(trajectory.final_theta());
    ConvergenceReport {
        converged: ip.abs() < tol,
        final_inner_product: ip,
    }
}
