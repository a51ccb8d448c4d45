//! Unified exact risk evaluation over finite sample spaces.
//!
//! A risk is ℓ(θ) = Σ_x c(x, θ) p(x) with either a fixed distribution
//! (passive) or a θ-dependent one (active). The two modes differ in the
//! gradient: the passive formula keeps only Σ ∇θc · p, while the active
//! formula adds the distribution term Σ c · ∇θp. Using the passive formula in
//! an active environment silently drops that term, which is exactly the
//! mistake the mode distinction makes measurable.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SaError};
use crate::gibbs::FiniteGibbsModel;
use crate::param::ParameterVector;
use crate::vecops;

/// A loss c(x, θ) with its parameter gradient.
pub trait LossFn: Send + Sync {
    fn value(&self, x: &[f64], theta: &ParameterVector) -> f64;
    fn grad_theta(&self, x: &[f64], theta: &ParameterVector) -> Vec<f64>;
}

/// A loss assembled from closures.
pub struct ClosureLoss<V, G> {
    pub value: V,
    pub grad: G,
}

impl<V, G> LossFn for ClosureLoss<V, G>
where
    V: Fn(&[f64], &ParameterVector) -> f64 + Send + Sync,
    G: Fn(&[f64], &ParameterVector) -> Vec<f64> + Send + Sync,
{
    fn value(&self, x: &[f64], theta: &ParameterVector) -> f64 {
        (self.value)(x, theta)
    }
    fn grad_theta(&self, x: &[f64], theta: &ParameterVector) -> Vec<f64> {
        (self.grad)(x, theta)
    }
}

/// A finitely supported distribution, possibly θ-dependent, exposing exact
/// enumeration and the score ∇θ log p.
pub trait ParamDistribution: Send + Sync {
    /// Support with probabilities at θ.
    fn enumerate(&self, theta: &ParameterVector) -> Vec<(Vec<f64>, f64)>;

    /// ∇θ log p(x | θ). Zero for θ-free distributions.
    fn score(&self, x: &[f64], theta: &ParameterVector) -> Vec<f64>;

    fn theta_free(&self) -> bool {
        false
    }
}

/// A fixed finite distribution (the passive environment).
#[derive(Clone, Debug)]
pub struct FixedDistribution {
    pub states: Vec<Vec<f64>>,
    pub probs: Vec<f64>,
}

impl FixedDistribution {
    pub fn new(states: Vec<Vec<f64>>, probs: Vec<f64>) -> Result<Self> {
        if states.is_empty() || states.len() != probs.len() {
            return Err(SaError::InvalidConfig(
                "fixed distribution needs matching, nonempty states and probabilities".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if probs.iter().any(|p| *p < 0.0) || (total - 1.0).abs() > 1e-12 {
            return Err(SaError::InvalidConfig(
                "fixed distribution probabilities must be nonnegative and sum to 1".into(),
            ));
        }
        Ok(Self { states, probs })
    }

    pub fn uniform(states: Vec<Vec<f64>>) -> Result<Self> {
        let n = states.len();
        Self::new(states, vec![1.0 / n as f64; n])
    }
}

impl ParamDistribution for FixedDistribution {
    fn enumerate(&self, _theta: &ParameterVector) -> Vec<(Vec<f64>, f64)> {
        self.states
            .iter()
            .cloned()
            .zip(self.probs.iter().copied())
            .collect()
    }

    fn score(&self, _x: &[f64], theta: &ParameterVector) -> Vec<f64> {
        vec![0.0; theta.dim()]
    }

    fn theta_free(&self) -> bool {
        true
    }
}

/// A finite Gibbs model viewed as a θ-dependent distribution. The score is
/// ∇θ log p(x | θ) = −dV(x)/dθ + E_p[dV/dθ].
#[derive(Clone)]
pub struct GibbsDistribution {
    pub model: FiniteGibbsModel,
}

impl ParamDistribution for GibbsDistribution {
    fn enumerate(&self, theta: &ParameterVector) -> Vec<(Vec<f64>, f64)> {
        let probs = self
            .model
            .probabilities(theta)
            .expect("finite energies required for enumeration");
        self.model.states().iter().cloned().zip(probs).collect()
    }

    fn score(&self, x: &[f64], theta: &ParameterVector) -> Vec<f64> {
        let i = self
            .model
            .state_index(x)
            .expect("score is defined on the model support");
        let mut s = self.model.energy_grad(i, theta);
        vecops::scale(&mut s, -1.0);
        let e = self
            .model
            .energy_grad_expectation(theta)
            .expect("finite energies required for the score");
        vecops::add_scaled(&mut s, 1.0, &e);
        s
    }
}

/// Which gradient formula applies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RiskMode {
    /// Fixed sampling distribution: ∇ℓ = Σ ∇θc · p.
    Passive,
    /// θ-dependent sampling distribution: ∇ℓ = Σ ∇θc · p + Σ c · ∇θp.
    Active,
}

/// Exact risk and gradient evaluation by enumeration.
#[derive(Clone)]
pub struct RiskOracle {
    pub mode: RiskMode,
    loss: Arc<dyn LossFn>,
    dist: Arc<dyn ParamDistribution>,
}

impl RiskOracle {
    pub fn passive(loss: Arc<dyn LossFn>, dist: Arc<dyn ParamDistribution>) -> Self {
        Self {
            mode: RiskMode::Passive,
            loss,
            dist,
        }
    }

    pub fn active(loss: Arc<dyn LossFn>, dist: Arc<dyn ParamDistribution>) -> Self {
        Self {
            mode: RiskMode::Active,
            loss,
            dist,
        }
    }

    pub fn loss_fn(&self) -> &Arc<dyn LossFn> {
        &self.loss
    }

    pub fn distribution(&self) -> &Arc<dyn ParamDistribution> {
        &self.dist
    }

    /// ℓ(θ) = Σ_x c(x, θ) p(x[, θ]).
    pub fn risk(&self, theta: &ParameterVector) -> f64 {
        self.dist
            .enumerate(theta)
            .iter()
            .map(|(x, p)| self.loss.value(x, theta) * p)
            .sum()
    }

    /// The mode's gradient formula.
    pub fn risk_grad(&self, theta: &ParameterVector) -> Vec<f64> {
        let mut acc = vec![0.0; theta.dim()];
        for (x, p) in self.dist.enumerate(theta) {
            if p == 0.0 {
                continue;
            }
            vecops::add_scaled(&mut acc, p, &self.loss.grad_theta(&x, theta));
        }
        if self.mode == RiskMode::Active {
            vecops::add_scaled(&mut acc, 1.0, &self.score_term(theta));
        }
        acc
    }

    /// The distribution term Σ_x c(x, θ) ∇θp(x | θ), enumerated through the
    /// identity ∇θp = p · ∇θ log p.
    pub fn score_term(&self, theta: &ParameterVector) -> Vec<f64> {
        let mut acc = vec![0.0; theta.dim()];
        for (x, p) in self.dist.enumerate(theta) {
            if p == 0.0 {
                continue;
            }
            let c = self.loss.value(&x, theta);
            vecops::add_scaled(&mut acc, c * p, &self.dist.score(&x, theta));
        }
        acc
    }

    /// Full Hessian of ℓ by second-order central differences.
    pub fn hessian_fd(&self, theta: &ParameterVector) -> Vec<Vec<f64>> {
        finite_difference_hessian(&|t: &ParameterVector| self.risk(t), theta)
    }

    /// A diagnostic upper estimate for sup |∇²ℓ| over a box: the max over a
    /// grid of the max-row-sum norm of the finite-difference Hessian. An
    /// estimate for checking the boundedness assumption, not a proof.
    pub fn risk_hessian_bound(&self, region: &BoxRegion, config: &HessianBoundConfig) -> f64 {
        let mut bound = 0.0f64;
        for point in region.grid(config) {
            let h = self.hessian_fd(&point);
            let row_sum = h
                .iter()
                .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
                .fold(0.0f64, f64::max);
            bound = bound.max(row_sum);
        }
        bound
    }
}

/// An axis-aligned box of parameter values.
#[derive(Clone, Debug)]
pub struct BoxRegion {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(SaError::InvalidConfig(
                "box bounds must match and be nonempty".into(),
            ));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(SaError::InvalidConfig(
                "box lower bounds must not exceed upper".into(),
            ));
        }
        Ok(Self { lower, upper })
    }

    pub fn centered(radius: f64, q: usize) -> Result<Self> {
        Self::new(vec![-radius; q], vec![radius; q])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Full product grid when it fits under `max_points`, otherwise a seeded
    /// uniform sample of the box.
    fn grid(&self, config: &HessianBoundConfig) -> Vec<ParameterVector> {
        let q = self.dim();
        let per_dim = config.points_per_dim.max(1);
        let total = (per_dim as f64).powi(q as i32);
        if total <= config.max_points as f64 {
            let mut points = Vec::new();
            let mut idx = vec![0usize; q];
            loop {
                let coords: Vec<f64> = (0..q)
                    .map(|i| {
                        if per_dim == 1 {
                            0.5 * (self.lower[i] + self.upper[i])
                        } else {
                            let frac = idx[i] as f64 / (per_dim - 1) as f64;
                            self.lower[i] + frac * (self.upper[i] - self.lower[i])
                        }
                    })
                    .collect();
                points.push(ParameterVector::new(coords).expect("box points are finite"));
                let mut carry = 0;
                loop {
                    idx[carry] += 1;
                    if idx[carry] < per_dim {
                        break;
                    }
                    idx[carry] = 0;
                    carry += 1;
                    if carry == q {
                        return points;
                    }
                }
            }
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            (0..config.max_points)
                .map(|_| {
                    let coords: Vec<f64> = (0..q)
                        .map(|i| {
                            let u: f64 = rng.random();
                            self.lower[i] + u * (self.upper[i] - self.lower[i])
                        })
                        .collect();
                    ParameterVector::new(coords).expect("box points are finite")
                })
                .collect()
        }
    }
}

/// Grid resolution for [`RiskOracle::risk_hessian_bound`].
#[derive(Clone, Copy, Debug)]
pub struct HessianBoundConfig {
    pub points_per_dim: usize,
    pub max_points: usize,
    pub seed: u64,
}

impl Default for HessianBoundConfig {
    fn default() -> Self {
        Self {
            points_per_dim: 3,
            max_points: 64,
            seed: 0,
        }
    }
}

/// Per-coordinate central-difference step: h_i = 1e−5 · max(1, |θ_i|).
pub fn fd_step(theta_i: f64) -> f64 {
    1e-5 * theta_i.abs().max(1.0)
}

/// Central finite differences of a scalar function of θ.
pub fn finite_difference_gradient(
    f: &dyn Fn(&ParameterVector) -> f64,
    theta: &ParameterVector,
) -> Vec<f64> {
    let q = theta.dim();
    let mut grad = vec![0.0; q];
    for i in 0..q {
        let h = fd_step(theta[i]);
        let mut plus = theta.to_vec();
        plus[i] += h;
        let mut minus = theta.to_vec();
        minus[i] -= h;
        grad[i] = (f(&ParameterVector::new(plus).expect("finite perturbation"))
            - f(&ParameterVector::new(minus).expect("finite perturbation")))
            / (2.0 * h);
    }
    grad
}

/// Second-order central differences of a scalar function of θ.
pub fn finite_difference_hessian(
    f: &dyn Fn(&ParameterVector) -> f64,
    theta: &ParameterVector,
) -> Vec<Vec<f64>> {
    let q = theta.dim();
    let f0 = f(theta);
    let mut h = vec![vec![0.0; q]; q];
    let at = |coords: Vec<f64>| f(&ParameterVector::new(coords).expect("finite perturbation"));
    for i in 0..q {
        let hi = fd_step(theta[i]);
        for j in 0..=i {
            let hj = fd_step(theta[j]);
            let value = if i == j {
                let mut plus = theta.to_vec();
                plus[i] += hi;
                let mut minus = theta.to_vec();
                minus[i] -= hi;
                (at(plus) - 2.0 * f0 + at(minus)) / (hi * hi)
            } else {
                let mut pp = theta.to_vec();
                pp[i] += hi;
                pp[j] += hj;
                let mut pm = theta.to_vec();
                pm[i] += hi;
                pm[j] -= hj;
                let mut mp = theta.to_vec();
                mp[i] -= hi;
                mp[j] += hj;
                let mut mm = theta.to_vec();
                mm[i] -= hi;
                mm[j] -= hj;
                (at(pp) - at(pm) - at(mp) + at(mm)) / (4.0 * hi * hj)
            };
            h[i][j] = value;
            h[j][i] = value;
        }
    }
    h
}

/// Max relative error between an analytic gradient and central finite
/// differences, the workhorse of the gradient checks.
pub fn gradient_rel_error(
    f: &dyn Fn(&ParameterVector) -> f64,
    analytic: &[f64],
    theta: &ParameterVector,
) -> f64 {
    let fd = finite_difference_gradient(f, theta);
    let scale = vecops::max_abs(analytic)
        .max(vecops::max_abs(&fd))
        .max(1e-10);
    fd.iter()
        .zip(analytic)
        .map(|(a, b)| (a - b).abs() / scale)
        .fold(0.0f64, f64::max)
}
