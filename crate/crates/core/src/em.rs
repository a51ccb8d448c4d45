//! Stochastic-descent expectation maximization on Bernoulli mixtures.
//!
//! The model has K hidden components over d-dimensional binary visibles.
//! θ is unconstrained in R^q: K mixing logits followed by K·d component
//! logits, with probabilities recovered through softmax/sigmoid. The hidden
//! label posterior p(h | v, θ) is exactly computable, so the stochastic
//! imputation step samples from the true posterior and every expectation has
//! an enumeration oracle.
//!
//! The update applied here is θ ← θ + (γ/m) Σ_j ∇θ log p(v, hʲ | θ): by the
//! Fisher identity the expected increment is −∇θ of the marginal NLL, which
//! descends the risk.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::diagnostics::RiskEvaluator;
use crate::direction::{SearchDirection, StateSampler, StochasticDirection};
use crate::error::{Result, SaError};
use crate::param::ParameterVector;
use crate::rng::{StreamRng, LANE_MODEL, LANE_OBSERVATION};
use crate::runner::{run, RunConfig, Trajectory};
use crate::vecops;

/// A K-component Bernoulli mixture over {0,1}^d.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MixtureModel {
    k: usize,
    d: usize,
}

/// Hidden labels drawn from the posterior p(h | v, θ).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Imputation {
    pub h_samples: Vec<usize>,
}

impl MixtureModel {
    pub fn new(k: usize, d: usize) -> Result<Self> {
        if k == 0 || d == 0 {
            return Err(SaError::InvalidConfig(
                "a mixture needs at least one component and one visible unit".into(),
            ));
        }
        Ok(Self { k, d })
    }

    pub fn components(&self) -> usize {
        self.k
    }

    pub fn visible_dim(&self) -> usize {
        self.d
    }

    /// q = K mixing logits + K·d component logits.
    pub fn param_dim(&self) -> usize {
        self.k + self.k * self.d
    }

    fn check_theta(&self, theta: &ParameterVector) -> Result<()> {
        if theta.dim() != self.param_dim() {
            return Err(SaError::DimensionMismatch {
                expected: self.param_dim(),
                got: theta.dim(),
            });
        }
        Ok(())
    }

    pub fn mixing_logits<'t>(&self, theta: &'t ParameterVector) -> &'t [f64] {
        &theta.as_slice()[..self.k]
    }

    pub fn component_logits<'t>(&self, theta: &'t ParameterVector, h: usize) -> &'t [f64] {
        let start = self.k + h * self.d;
        &theta.as_slice()[start..start + self.d]
    }

    /// Softmax of the mixing logits.
    pub fn mixing_probs(&self, theta: &ParameterVector) -> Vec<f64> {
        vecops::softmax(self.mixing_logits(theta))
    }

    /// Sigmoid of component h's logits: the Bernoulli means μ_h.
    pub fn bernoulli_probs(&self, theta: &ParameterVector, h: usize) -> Vec<f64> {
        self.component_logits(theta, h)
            .iter()
            .map(|z| vecops::sigmoid(*z))
            .collect()
    }

    /// log p(v, h | θ) = log π_h + Σ_r [v_r log μ_{h,r} + (1−v_r) log(1−μ_{h,r})].
    pub fn joint_log_density(&self, v: &[f64], h: usize, theta: &ParameterVector) -> f64 {
        debug_assert!(h < self.k);
        debug_assert_eq!(v.len(), self.d);
        let mix = self.mixing_logits(theta);
        let log_pi = mix[h] - vecops::log_sum_exp(mix);
        let z = self.component_logits(theta, h);
        let log_lik: f64 = v
            .iter()
            .zip(z)
            .map(|(vr, zr)| {
                if *vr == 1.0 {
                    vecops::log_sigmoid(*zr)
                } else {
                    vecops::log_sigmoid(-*zr)
                }
            })
            .sum();
        log_pi + log_lik
    }

    /// log p(v | θ) = logsumexp_h log p(v, h | θ).
    pub fn marginal_log_density(&self, v: &[f64], theta: &ParameterVector) -> f64 {
        let joints: Vec<f64> = (0..self.k)
            .map(|h| self.joint_log_density(v, h, theta))
            .collect();
        vecops::log_sum_exp(&joints)
    }

    /// The exact posterior p(h | v, θ) over the K labels.
    pub fn posterior(&self, v: &[f64], theta: &ParameterVector) -> Vec<f64> {
        let joints: Vec<f64> = (0..self.k)
            .map(|h| self.joint_log_density(v, h, theta))
            .collect();
        vecops::softmax(&joints)
    }

    /// m i.i.d. labels from the exact posterior.
    pub fn posterior_sample(
        &self,
        v: &[f64],
        theta: &ParameterVector,
        m: u32,
        rng: &mut ChaCha8Rng,
    ) -> Imputation {
        let posterior = self.posterior(v, theta);
        let h_samples = (0..m)
            .map(|_| {
                let u: f64 = rng.random();
                vecops::categorical_draw(&posterior, u)
            })
            .collect();
        Imputation { h_samples }
    }

    /// ∇θ log p(v, h | θ): softmax score on the mixing block, (v − μ_h) on
    /// component h's block, zero elsewhere.
    pub fn joint_log_grad(&self, v: &[f64], h: usize, theta: &ParameterVector) -> Vec<f64> {
        let mut grad = vec![0.0; self.param_dim()];
        let pi = self.mixing_probs(theta);
        for (j, p) in pi.iter().enumerate() {
            grad[j] = if j == h { 1.0 - p } else { -p };
        }
        let mu = self.bernoulli_probs(theta, h);
        let start = self.k + h * self.d;
        for r in 0..self.d {
            grad[start + r] = v[r] - mu[r];
        }
        grad
    }

    /// The full visible space {0,1}^d (requires small d).
    pub fn visible_states(&self) -> Vec<Vec<f64>> {
        crate::gibbs::binary_states(self.d)
    }

    /// p(v | θ) for every visible state, in `visible_states` order.
    pub fn visible_distribution(&self, theta: &ParameterVector) -> Vec<f64> {
        self.visible_states()
            .iter()
            .map(|v| self.marginal_log_density(v, theta).exp())
            .collect()
    }

    /// n i.i.d. visible vectors from the model at `theta_star`.
    pub fn generate(
        &self,
        theta_star: &ParameterVector,
        n: usize,
        rng: &mut ChaCha8Rng,
    ) -> Vec<Vec<f64>> {
        let pi = self.mixing_probs(theta_star);
        (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                let h = vecops::categorical_draw(&pi, u);
                let mu = self.bernoulli_probs(theta_star, h);
                mu.iter()
                    .map(|p| {
                        let u: f64 = rng.random();
                        if u < *p {
                            1.0
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// Mixing logits zero, component logits from a seeded standard normal
    /// scaled by 0.1: breaks component symmetry while staying near uniform.
    pub fn default_initialization(&self, seed: u64) -> ParameterVector {
        let mut rng = StreamRng::new(seed).stream(0, crate::rng::LANE_INIT);
        let mut values = vec![0.0; self.param_dim()];
        for v in values.iter_mut().skip(self.k) {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = 0.1 * z;
        }
        ParameterVector::new(values).expect("finite initialization")
    }
}

fn check_data(model: &MixtureModel, data: &[Vec<f64>]) -> Result<()> {
    if data.is_empty() {
        return Err(SaError::InvalidConfig("a dataset must be nonempty".into()));
    }
    for v in data {
        if v.len() != model.visible_dim() {
            return Err(SaError::DimensionMismatch {
                expected: model.visible_dim(),
                got: v.len(),
            });
        }
        if v.iter().any(|x| *x != 0.0 && *x != 1.0) {
            return Err(SaError::InvalidConfig(
                "visible vectors must be binary (0/1)".into(),
            ));
        }
    }
    Ok(())
}

/// −(1/n) Σ_i log Σ_h p(v_i, h | θ), the exact missing-data NLL.
pub fn marginal_nll(model: &MixtureModel, data: &[Vec<f64>], theta: &ParameterVector) -> f64 {
    let n = data.len() as f64;
    -data
        .iter()
        .map(|v| model.marginal_log_density(v, theta))
        .sum::<f64>()
        / n
}

/// ∇θ of [`marginal_nll`], by the Fisher identity: the posterior-weighted
/// joint score, enumerated exactly over h.
pub fn marginal_nll_grad(
    model: &MixtureModel,
    data: &[Vec<f64>],
    theta: &ParameterVector,
) -> Vec<f64> {
    let n = data.len() as f64;
    let mut grad = vec![0.0; model.param_dim()];
    for v in data {
        let posterior = model.posterior(v, theta);
        for (h, w) in posterior.iter().enumerate() {
            vecops::add_scaled(&mut grad, -w / n, &model.joint_log_grad(v, h, theta));
        }
    }
    grad
}

/// The stochastic imputation direction (γ/m is applied by the caller):
/// +(1/m) Σ_j ∇θ log p(v, hʲ | θ) with hʲ from the exact posterior at the
/// current θ.
pub fn em_direction(
    model: &MixtureModel,
    v: &[f64],
    theta: &ParameterVector,
    m: u32,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let imputation = model.posterior_sample(v, theta, m, rng);
    let mut dir = vec![0.0; model.param_dim()];
    let w = 1.0 / m as f64;
    for h in &imputation.h_samples {
        vecops::add_scaled(&mut dir, w, &model.joint_log_grad(v, *h, theta));
    }
    dir
}

/// The m → ∞ limit of [`em_direction`] for one visible vector:
/// Σ_h p(h | v, θ) ∇θ log p(v, h | θ).
pub fn em_expected_direction(model: &MixtureModel, v: &[f64], theta: &ParameterVector) -> Vec<f64> {
    let posterior = model.posterior(v, theta);
    let mut dir = vec![0.0; model.param_dim()];
    for (h, w) in posterior.iter().enumerate() {
        vecops::add_scaled(&mut dir, *w, &model.joint_log_grad(v, h, theta));
    }
    dir
}

/// The training source: one visible vector from the data lane, m imputations
/// from the model lane.
pub struct SemDirectionSource<'a> {
    model: &'a MixtureModel,
    data: &'a [Vec<f64>],
    m: u32,
}

impl<'a> SemDirectionSource<'a> {
    pub fn new(model: &'a MixtureModel, data: &'a [Vec<f64>], m: u32) -> Self {
        Self { model, data, m }
    }
}

impl StochasticDirection for SemDirectionSource<'_> {
    fn mean_direction(
        &mut self,
        theta: &ParameterVector,
        iter: u64,
        rng: &StreamRng,
    ) -> Result<Vec<f64>> {
        let mut obs_lane = rng.stream(iter, LANE_OBSERVATION);
        let i = obs_lane.random_range(0..self.data.len());
        let v = &self.data[i];
        let mut model_lane = rng.stream(iter, LANE_MODEL);
        let dir = em_direction(self.model, v, theta, self.m, &mut model_lane);
        if dir.iter().any(|x| !x.is_finite()) {
            return Err(SaError::NonFiniteDirection {
                iter,
                sample: v.clone(),
            });
        }
        Ok(dir)
    }
}

/// Exact loss/gradient/expected-direction evaluation for SEM runs.
pub struct SemEvaluator<'a> {
    pub model: &'a MixtureModel,
    pub data: &'a [Vec<f64>],
}

impl RiskEvaluator for SemEvaluator<'_> {
    fn loss(&self, theta: &ParameterVector) -> f64 {
        marginal_nll(self.model, self.data, theta)
    }

    fn grad(&self, theta: &ParameterVector) -> Vec<f64> {
        marginal_nll_grad(self.model, self.data, theta)
    }

    fn expected_direction(&self, theta: &ParameterVector) -> Vec<f64> {
        let n = self.data.len() as f64;
        let mut dir = vec![0.0; self.model.param_dim()];
        for v in self.data {
            vecops::add_scaled(
                &mut dir,
                1.0 / n,
                &em_expected_direction(self.model, v, theta),
            );
        }
        dir
    }
}

/// Runs the stochastic-descent EM update, recording the exact marginal NLL
/// at checkpoints.
pub fn train_sem(
    model: &MixtureModel,
    data: &[Vec<f64>],
    initial: &ParameterVector,
    m: u32,
    run_config: &RunConfig,
) -> Result<Trajectory> {
    check_data(model, data)?;
    model.check_theta(initial)?;
    if m == 0 {
        return Err(SaError::InvalidConfig(
            "imputation count m must be >= 1".into(),
        ));
    }
    let mut source = SemDirectionSource { model, data, m };
    let evaluator = SemEvaluator { model, data };
    run(initial, &mut source, Some(&evaluator), run_config)
}

/// Classical EM with exact posterior expectations, run from the same logit
/// initialization; the deterministic oracle the stochastic runs are compared
/// against. Returns the logit-space fixed point and its NLL.
pub fn classical_em(
    model: &MixtureModel,
    data: &[Vec<f64>],
    initial: &ParameterVector,
    max_iters: u64,
    nll_tol: f64,
) -> Result<(ParameterVector, f64, u64)> {
    check_data(model, data)?;
    model.check_theta(initial)?;
    let n = data.len() as f64;
    let k = model.components();
    let d = model.visible_dim();
    const EPS: f64 = 1e-9;

    let mut theta = initial.clone();
    let mut nll = marginal_nll(model, data, &theta);
    let mut iters = 0;
    for _ in 0..max_iters {
        iters += 1;
        // E-step: exact posterior responsibilities.
        // M-step: closed-form mixture weights and Bernoulli means.
        let mut weight = vec![0.0; k];
        let mut mean = vec![vec![0.0; d]; k];
        for v in data {
            let posterior = model.posterior(v, &theta);
            for (h, w) in posterior.iter().enumerate() {
                weight[h] += w;
                vecops::add_scaled(&mut mean[h], *w, v);
            }
        }
        let mut values = vec![0.0; model.param_dim()];
        for h in 0..k {
            let pi = (weight[h] / n).clamp(EPS, 1.0);
            values[h] = pi.ln();
            for r in 0..d {
                let mu = if weight[h] > 0.0 {
                    (mean[h][r] / weight[h]).clamp(EPS, 1.0 - EPS)
                } else {
                    0.5
                };
                values[k + h * d + r] = (mu / (1.0 - mu)).ln();
            }
        }
        theta = ParameterVector::new(values)?;
        let next_nll = marginal_nll(model, data, &theta);
        let delta = nll - next_nll;
        nll = next_nll;
        if delta.abs() < nll_tol {
            break;
        }
    }
    Ok((theta, nll, iters))
}

/// The (v, h) pair encoded as [v…, h] in R^{d+1}, for the downhill
/// diagnostics: enumeration runs over the empirical visibles and the exact
/// posterior.
pub struct SemPairSampler<'a> {
    model: &'a MixtureModel,
    data: &'a [Vec<f64>],
}

impl<'a> SemPairSampler<'a> {
    pub fn new(model: &'a MixtureModel, data: &'a [Vec<f64>]) -> Self {
        Self { model, data }
    }

    fn empirical(&self) -> Vec<(Vec<f64>, f64)> {
        let mut support: Vec<(Vec<f64>, f64)> = Vec::new();
        let w = 1.0 / self.data.len() as f64;
        for v in self.data {
            match support.iter_mut().find(|(s, _)| s == v) {
                Some((_, weight)) => *weight += w,
                None => support.push((v.clone(), w)),
            }
        }
        support
    }
}

impl StateSampler for SemPairSampler<'_> {
    fn sample(&self, theta: &ParameterVector, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let i = rng.random_range(0..self.data.len());
        let v = &self.data[i];
        let imputation = self.model.posterior_sample(v, theta, 1, rng);
        let mut pair = v.clone();
        pair.push(imputation.h_samples[0] as f64);
        pair
    }

    fn sample_bound(&self) -> f64 {
        ((self.model.visible_dim() as f64) + (self.model.components() as f64).powi(2)).sqrt()
    }

    fn enumerate(&self, theta: &ParameterVector) -> Option<Vec<(Vec<f64>, f64)>> {
        let mut support = Vec::new();
        for (v, w) in self.empirical() {
            let posterior = self.model.posterior(&v, theta);
            for (h, p) in posterior.iter().enumerate() {
                let mut pair = v.clone();
                pair.push(h as f64);
                support.push((pair, w * p));
            }
        }
        Some(support)
    }
}

/// The direction ∇θ log p(v, h | θ) over encoded (v, h) pairs.
pub struct SemPairDirection<'a> {
    pub model: &'a MixtureModel,
}

impl SearchDirection for SemPairDirection<'_> {
    fn eval(&self, x: &[f64], theta: &ParameterVector) -> Vec<f64> {
        let d = self.model.visible_dim();
        let (v, h) = x.split_at(d);
        self.model.joint_log_grad(v, h[0] as usize, theta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::risk::gradient_rel_error;
    use crate::rng::LANE_DIAGNOSTIC;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn theta_from(_model: &MixtureModel, mixing: &[f64], components: &[&[f64]]) -> ParameterVector {
        let mut values = mixing.to_vec();
        for c in components {
            values.extend_from_slice(c);
        }
        ParameterVector::new(values).expect("finite theta")
    }

    #[test]
    fn single_component_joint_is_bernoulli_likelihood() {
        let model = MixtureModel::new(1, 3).unwrap();
        let theta = theta_from(&model, &[0.7], &[&[0.5, -1.0, 2.0]]);
        let v = [1.0, 0.0, 1.0];
        let expected: f64 =
            vecops::log_sigmoid(0.5) + vecops::log_sigmoid(1.0) + vecops::log_sigmoid(2.0);
        assert_relative_eq!(
            model.joint_log_density(&v, 0, &theta),
            expected,
            epsilon = 1e-12
        );
    }

    #[test]
    fn identical_components_make_labels_interchangeable() {
        let model = MixtureModel::new(2, 2).unwrap();
        let theta = theta_from(&model, &[0.0, 0.0], &[&[0.4, -0.3], &[0.4, -0.3]]);
        let v = [1.0, 1.0];
        let a = model.joint_log_density(&v, 0, &theta);
        let b = model.joint_log_density(&v, 1, &theta);
        assert_relative_eq!(a, b, epsilon = 1e-14);
        // joint = log(1/2) + component likelihood for both labels
        assert_relative_eq!(a - (0.5f64).ln(), b - (0.5f64).ln(), epsilon = 1e-14);
    }

    #[test]
    fn joint_sums_to_marginal() {
        let model = MixtureModel::new(3, 2).unwrap();
        let theta = theta_from(
            &model,
            &[0.3, -0.2, 0.9],
            &[&[0.5, -0.5], &[1.5, 0.0], &[-1.0, 2.0]],
        );
        let v = [0.0, 1.0];
        let summed: f64 = (0..3)
            .map(|h| model.joint_log_density(&v, h, &theta).exp())
            .sum();
        assert_relative_eq!(
            summed.ln(),
            model.marginal_log_density(&v, &theta),
            epsilon = 1e-12
        );
    }

    #[test]
    fn redundant_mixture_equals_single_component_nll() {
        let one = MixtureModel::new(1, 2).unwrap();
        let two = MixtureModel::new(2, 2).unwrap();
        let theta1 = theta_from(&one, &[0.0], &[&[0.8, -0.6]]);
        let theta2 = theta_from(&two, &[0.3, 0.3], &[&[0.8, -0.6], &[0.8, -0.6]]);
        let data = vec![vec![1.0, 0.0], vec![0.0, 0.0], vec![1.0, 1.0]];
        assert_relative_eq!(
            marginal_nll(&one, &data, &theta1),
            marginal_nll(&two, &data, &theta2),
            epsilon = 1e-12
        );
    }

    #[test]
    fn hand_computed_marginal_nll() {
        // d=1, K=2, μ = (0.9, 0.1), π = (0.5, 0.5), v = 1:
        // −log(0.5·0.9 + 0.5·0.1) = −log 0.5
        let model = MixtureModel::new(2, 1).unwrap();
        let logit = |p: f64| (p / (1.0 - p)).ln();
        let theta = theta_from(&model, &[0.0, 0.0], &[&[logit(0.9)], &[logit(0.1)]]);
        let data = vec![vec![1.0]];
        assert_relative_eq!(
            marginal_nll(&model, &data, &theta),
            -(0.5f64.ln()),
            epsilon = 1e-12
        );
    }

    #[test]
    fn nll_decreases_along_small_gradient_steps() {
        let model = MixtureModel::new(2, 3).unwrap();
        let data = vec![
            vec![1.0, 1.0, 0.0],
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 1.0],
            vec![0.0, 0.0, 1.0],
        ];
        let mut theta = model.default_initialization(3);
        let mut last = marginal_nll(&model, &data, &theta);
        for _ in 0..100 {
            let g = marginal_nll_grad(&model, &data, &theta);
            let mut next = theta.to_vec();
            vecops::add_scaled(&mut next, -1e-3, &g);
            theta = ParameterVector::new(next).unwrap();
            let nll = marginal_nll(&model, &data, &theta);
            assert!(nll <= last + 1e-12, "nll rose: {last} -> {nll}");
            last = nll;
        }
    }

    #[test]
    fn posterior_sampling_matches_symmetry_and_dominance() {
        let model = MixtureModel::new(2, 2).unwrap();
        // identical components: posterior uniform
        let theta = theta_from(&model, &[0.0, 0.0], &[&[0.4, 0.4], &[0.4, 0.4]]);
        let v = [1.0, 0.0];
        let mut rng = StreamRng::new(2).stream(0, LANE_DIAGNOSTIC);
        let n = 100_000;
        let imputation = model.posterior_sample(&v, &theta, n, &mut rng);
        let freq = imputation.h_samples.iter().filter(|h| **h == 0).count() as f64 / n as f64;
        let se = (0.25f64 / n as f64).sqrt();
        assert!((freq - 0.5).abs() <= 4.0 * se, "freq {freq}");

        // dominant component: likelihood ratio far above 10^4
        let logit = |p: f64| (p / (1.0 - p)).ln();
        let dominant = theta_from(
            &model,
            &[0.0, 0.0],
            &[&[logit(0.999), logit(0.001)], &[logit(0.001), logit(0.999)]],
        );
        let posterior = model.posterior(&[1.0, 0.0], &dominant);
        assert!(posterior[0] > 0.999);
        let imputation = model.posterior_sample(&[1.0, 0.0], &dominant, 10_000, &mut rng);
        let freq = imputation.h_samples.iter().filter(|h| **h == 0).count() as f64 / 10_000.0;
        assert!(freq > 0.999, "freq {freq}");
    }

    #[test]
    fn posterior_sampling_is_deterministic_in_rng_state() {
        let model = MixtureModel::new(3, 2).unwrap();
        let theta = model.default_initialization(1);
        let v = [1.0, 0.0];
        let a = model.posterior_sample(&v, &theta, 16, &mut StreamRng::new(7).stream(0, 3));
        let b = model.posterior_sample(&v, &theta, 16, &mut StreamRng::new(7).stream(0, 3));
        assert_eq!(a, b);
    }

    #[test]
    fn fisher_identity_holds_by_enumeration() {
        // Σ_h ∇ log p(v, h | θ) p(h | v, θ) = ∇ log p(v | θ)
        let model = MixtureModel::new(3, 4).unwrap();
        let mut rng = StreamRng::new(5).stream(0, LANE_DIAGNOSTIC);
        for _ in 0..20 {
            let theta = ParameterVector::new(
                (0..model.param_dim())
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        z
                    })
                    .collect(),
            )
            .unwrap();
            let v: Vec<f64> = (0..4)
                .map(|_| if rng.random::<f64>() < 0.5 { 1.0 } else { 0.0 })
                .collect();
            let lhs = em_expected_direction(&model, &v, &theta);
            let data = vec![v.clone()];
            let rhs: Vec<f64> = marginal_nll_grad(&model, &data, &theta)
                .iter()
                .map(|g| -g)
                .collect();
            for (a, b) in lhs.iter().zip(&rhs) {
                assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn marginal_gradient_matches_finite_differences() {
        let model = MixtureModel::new(2, 3).unwrap();
        let data = vec![
            vec![1.0, 0.0, 1.0],
            vec![0.0, 0.0, 1.0],
            vec![1.0, 1.0, 0.0],
        ];
        let theta = model.default_initialization(11);
        let g = marginal_nll_grad(&model, &data, &theta);
        let err = gradient_rel_error(
            &|t: &ParameterVector| marginal_nll(&model, &data, t),
            &g,
            &theta,
        );
        assert!(err < 1e-6, "rel error {err}");
    }

    #[test]
    fn expected_direction_vanishes_at_a_stationary_point() {
        let model = MixtureModel::new(2, 2).unwrap();
        let data = vec![
            vec![1.0, 1.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, 0.0],
            vec![1.0, 1.0],
        ];
        // descend deterministically to a stationary point first
        let mut theta = model.default_initialization(4);
        for _ in 0..20_000 {
            let g = marginal_nll_grad(&model, &data, &theta);
            if vecops::max_abs(&g) < 1e-12 {
                break;
            }
            let mut next = theta.to_vec();
            vecops::add_scaled(&mut next, -0.5, &g);
            theta = ParameterVector::new(next).unwrap();
        }
        let n = data.len() as f64;
        let mut dir = vec![0.0; model.param_dim()];
        for v in &data {
            vecops::add_scaled(&mut dir, 1.0 / n, &em_expected_direction(&model, v, &theta));
        }
        assert!(vecops::max_abs(&dir) < 1e-8, "direction {dir:?}");
    }

    #[test]
    fn single_component_direction_is_complete_data_score() {
        let model = MixtureModel::new(1, 3).unwrap();
        let theta = theta_from(&model, &[0.0], &[&[0.5, -0.5, 1.0]]);
        let v = [1.0, 0.0, 1.0];
        let mut rng = StreamRng::new(1).stream(0, LANE_DIAGNOSTIC);
        let dir = em_direction(&model, &v, &theta, 7, &mut rng);
        let score = model.joint_log_grad(&v, 0, &theta);
        for (a, b) in dir.iter().zip(&score) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn large_m_direction_approximates_the_expected_step() {
        let model = MixtureModel::new(2, 4).unwrap();
        let theta = model.default_initialization(8);
        let v = [1.0, 0.0, 1.0, 1.0];
        let expected = em_expected_direction(&model, &v, &theta);
        let mut rng = StreamRng::new(19).stream(0, LANE_DIAGNOSTIC);
        let m = 1_000u32;
        let dir = em_direction(&model, &v, &theta, m, &mut rng);
        // per-label scores are bounded by ~2; 3 SE of the mean over m draws
        let posterior = model.posterior(&v, &theta);
        let scores: Vec<Vec<f64>> = (0..2)
            .map(|h| model.joint_log_grad(&v, h, &theta))
            .collect();
        for i in 0..model.param_dim() {
            let mean: f64 = posterior.iter().zip(&scores).map(|(p, s)| p * s[i]).sum();
            let var: f64 = posterior
                .iter()
                .zip(&scores)
                .map(|(p, s)| p * (s[i] - mean).powi(2))
                .sum();
            let se = (var / m as f64).sqrt();
            assert!(
                (dir[i] - expected[i]).abs() <= 3.0 * se + 1e-12,
                "component {i}: {} vs {} (se {se})",
                dir[i],
                expected[i]
            );
        }
    }

    #[test]
    fn zero_step_size_freezes_training_updates() {
        let model = MixtureModel::new(2, 3).unwrap();
        let data = vec![vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 0.0]];
        let theta = model.default_initialization(6);
        let mut source = SemDirectionSource {
            model: &model,
            data: &data,
            m: 5,
        };
        let dir = source
            .mean_direction(&theta, 0, &StreamRng::new(2))
            .unwrap();
        let next = crate::direction::apply_step(&theta, 0.0, &dir).unwrap();
        assert_eq!(next, theta);
    }

    #[test]
    fn training_rejects_non_binary_or_mismatched_data() {
        let model = MixtureModel::new(2, 3).unwrap();
        let theta = model.default_initialization(1);
        let config = crate::runner::RunConfig::new(
            crate::schedule::StepSizeSchedule::constant(0.1).unwrap(),
            10,
            1,
        );
        let bad_values = vec![vec![0.5, 0.0, 1.0]];
        assert!(train_sem(&model, &bad_values, &theta, 1, &config).is_err());
        let bad_dim = vec![vec![1.0, 0.0]];
        assert!(train_sem(&model, &bad_dim, &theta, 1, &config).is_err());
        let empty: Vec<Vec<f64>> = Vec::new();
        assert!(train_sem(&model, &empty, &theta, 1, &config).is_err());
        assert!(train_sem(&model, &[vec![1.0, 0.0, 1.0]], &theta, 0, &config).is_err());
    }

    #[test]
    fn classical_em_monotonically_decreases_nll() {
        let model = MixtureModel::new(2, 4).unwrap();
        let logit = |p: f64| (p / (1.0 - p)).ln();
        let theta_star = theta_from(
            &model,
            &[0.0, 0.0],
            &[
                &[logit(0.9), logit(0.9), logit(0.1), logit(0.1)],
                &[logit(0.1), logit(0.1), logit(0.9), logit(0.9)],
            ],
        );
        let mut rng = StreamRng::new(12).stream(0, LANE_DIAGNOSTIC);
        let data = model.generate(&theta_star, 200, &mut rng);
        let initial = model.default_initialization(12);
        let start_nll = marginal_nll(&model, &data, &initial);
        let (_theta, nll, iters) = classical_em(&model, &data, &initial, 500, 1e-12).unwrap();
        assert!(nll <= start_nll);
        assert!(iters > 1);
    }

    proptest! {
        /// Posterior normalization: Σ_h p(h | v, θ) = 1 within 1e−12.
        #[test]
        fn posterior_normalizes(
            seed in 0u64..1000,
            bits in 0usize..16,
        ) {
            let model = MixtureModel::new(3, 4).unwrap();
            let theta = model.default_initialization(seed);
            let v: Vec<f64> = (0..4).map(|r| ((bits >> r) & 1) as f64).collect();
            let posterior = model.posterior(&v, &theta);
            let total: f64 = posterior.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }

        /// The visible marginal sums to 1 over {0,1}^d.
        #[test]
        fn visible_marginal_normalizes(seed in 0u64..1000) {
            let model = MixtureModel::new(2, 4).unwrap();
            let theta = model.default_initialization(seed);
            let total: f64 = model.visible_distribution(&theta).iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }
}
