//! Contrastive-divergence learning of Gibbs model parameters.
//!
//! The search direction for an observation x and model samples y¹…yᵐ drawn
//! at the current θ is
//!
//!   d = −dV(x; θ)/dθ + (1/m) Σ_j dV(yʲ; θ)/dθ,
//!
//! a stochastic stand-in for the negative likelihood gradient whose model
//! term would otherwise require the full expectation under p(· | θ). With
//! exact model draws the expected direction equals −∇ℓ exactly; with finite
//! Gibbs chains (CD-k) it generally does not, so the chain variant is
//! something to measure, not assume.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::diagnostics::RiskEvaluator;
use crate::direction::{SearchDirection, StateSampler, StochasticDirection};
use crate::error::{Result, SaError};
use crate::gibbs::{mat_mul, FiniteGibbsModel, GibbsChainState};
use crate::param::ParameterVector;
use crate::rng::{StreamRng, LANE_MODEL, LANE_OBSERVATION};
use crate::runner::{run, RunConfig, Trajectory};
use crate::vecops;

/// How the model-side mini-batch y¹…yᵐ is produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SamplerMode {
    /// m i.i.d. exact inverse-CDF draws from p(· | θ).
    Exact,
    /// A fresh chain started at the observation, advanced `sweeps` full
    /// Gibbs sweeps before each collected sample (classic CD-k).
    CdK { sweeps: u32 },
    /// One chain kept for the whole run, advanced `sweeps` sweeps per
    /// collected sample. Experimental.
    Persistent { sweeps: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CdConfig {
    pub m: u32,
    pub sampler_mode: SamplerMode,
    /// Extra sweeps after chain initialization, before collection starts.
    pub burn_in: u32,
}

impl CdConfig {
    pub fn new(m: u32, sampler_mode: SamplerMode, burn_in: u32) -> Result<Self> {
        if m == 0 {
            return Err(SaError::InvalidConfig(
                "mini-batch size m must be >= 1".into(),
            ));
        }
        match sampler_mode {
            SamplerMode::CdK { sweeps } | SamplerMode::Persistent { sweeps } if sweeps == 0 => {
                return Err(SaError::InvalidConfig("chain sweeps must be >= 1".into()));
            }
            _ => {}
        }
        Ok(Self {
            m,
            sampler_mode,
            burn_in,
        })
    }

    pub fn exact(m: u32) -> Result<Self> {
        Self::new(m, SamplerMode::Exact, 0)
    }
}

impl Default for CdConfig {
    fn default() -> Self {
        Self {
            m: 1,
            sampler_mode: SamplerMode::Exact,
            burn_in: 0,
        }
    }
}

/// Observations from a generating process, stored as indices into the model's
/// state list with normalized weights. A plain sample has uniform weights;
/// weighted data stands in for an arbitrary empirical distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct DataSet {
    indices: Vec<usize>,
    weights: Vec<f64>,
}

impl DataSet {
    pub fn from_indices(model: &FiniteGibbsModel, indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(SaError::InvalidConfig("a dataset must be nonempty".into()));
        }
        if let Some(&bad) = indices.iter().find(|i| **i >= model.n_states()) {
            return Err(SaError::InvalidConfig(format!(
                "observation index {bad} is out of range for a {}-state model",
                model.n_states()
            )));
        }
        let n = indices.len();
        Ok(Self {
            indices,
            weights: vec![1.0 / n as f64; n],
        })
    }

    pub fn from_states(model: &FiniteGibbsModel, states: &[Vec<f64>]) -> Result<Self> {
        let indices = states
            .iter()
            .map(|s| model.state_index(s))
            .collect::<Result<Vec<_>>>()?;
        Self::from_indices(model, indices)
    }

    pub fn weighted(
        model: &FiniteGibbsModel,
        indices: Vec<usize>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let mut data = Self::from_indices(model, indices)?;
        if weights.len() != data.indices.len() {
            return Err(SaError::DimensionMismatch {
                expected: data.indices.len(),
                got: weights.len(),
            });
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| *w < 0.0) || total <= 0.0 || !total.is_finite() {
            return Err(SaError::InvalidConfig(
                "weights must be nonnegative with a positive finite sum".into(),
            ));
        }
        data.weights = weights.iter().map(|w| w / total).collect();
        Ok(data)
    }

    /// n i.i.d. exact draws from the model at `theta_star`.
    pub fn generate(
        model: &FiniteGibbsModel,
        theta_star: &ParameterVector,
        n: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if n == 0 {
            return Err(SaError::InvalidConfig("a dataset must be nonempty".into()));
        }
        let indices = (0..n)
            .map(|_| model.exact_sample(theta_star, rng))
            .collect::<Result<Vec<_>>>()?;
        Self::from_indices(model, indices)
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// One observation drawn according to the weights (uniform for plain
    /// samples); returns the model state index.
    pub fn draw(&self, rng: &mut ChaCha8Rng) -> usize {
        let u: f64 = rng.random();
        self.indices[vecops::categorical_draw(&self.weights, u)]
    }

    /// Total weight per model state: the empirical distribution p̂_o over the
    /// model's state list.
    pub fn empirical_distribution(&self, model: &FiniteGibbsModel) -> Vec<f64> {
        let mut probs = vec![0.0; model.n_states()];
        for (i, w) in self.indices.iter().zip(&self.weights) {
            probs[*i] += w;
        }
        probs
    }
}

/// −(1/n) Σ_i log p(x_i | θ) with the exact partition function; weighted data
/// replaces the plain average by its weighted analogue.
pub fn exact_nll(model: &FiniteGibbsModel, data: &DataSet, theta: &ParameterVector) -> Result<f64> {
    let log_z = model.log_partition(theta)?;
    let mut mean_energy = 0.0;
    for (i, w) in data.indices.iter().zip(data.weights()) {
        mean_energy += w * model.energy_value(*i, theta);
    }
    Ok(mean_energy + log_z)
}

/// ∇θ of [`exact_nll`]: the data term minus the exact model expectation.
pub fn exact_nll_grad(
    model: &FiniteGibbsModel,
    data: &DataSet,
    theta: &ParameterVector,
) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; theta.dim()];
    for (i, w) in data.indices.iter().zip(data.weights()) {
        vecops::add_scaled(&mut grad, *w, &model.energy_grad(*i, theta));
    }
    let model_term = model.energy_grad_expectation(theta)?;
    vecops::add_scaled(&mut grad, -1.0, &model_term);
    Ok(grad)
}

/// Draws the model-side mini-batch for one update; owns the persistent chain
/// when that mode is selected.
#[derive(Clone, Debug)]
pub struct CdSampler {
    config: CdConfig,
    chain: Option<GibbsChainState>,
}

impl CdSampler {
    pub fn new(config: CdConfig) -> Self {
        Self {
            config,
            chain: None,
        }
    }

    pub fn config(&self) -> &CdConfig {
        &self.config
    }

    /// State indices y¹…yᵐ drawn at the current θ.
    pub fn draw_batch(
        &mut self,
        model: &FiniteGibbsModel,
        x_obs: usize,
        theta: &ParameterVector,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<usize>> {
        let m = self.config.m as usize;
        match self.config.sampler_mode {
            SamplerMode::Exact => (0..m).map(|_| model.exact_sample(theta, rng)).collect(),
            SamplerMode::CdK { sweeps } => {
                let mut chain = GibbsChainState::new(x_obs);
                for _ in 0..self.config.burn_in {
                    chain = model.gibbs_sweep(chain, theta, rng)?;
                }
                let mut batch = Vec::with_capacity(m);
                for _ in 0..m {
                    for _ in 0..sweeps {
                        chain = model.gibbs_sweep(chain, theta, rng)?;
                    }
                    batch.push(chain.current);
                }
                Ok(batch)
            }
            SamplerMode::Persistent { sweeps } => {
                let mut chain = match self.chain {
                    Some(chain) => chain,
                    None => {
                        let start = rng.random_range(0..model.n_states());
                        let mut chain = GibbsChainState::new(start);
                        for _ in 0..self.config.burn_in {
                            chain = model.gibbs_sweep(chain, theta, rng)?;
                        }
                        chain
                    }
                };
                let mut batch = Vec::with_capacity(m);
                for _ in 0..m {
                    for _ in 0..sweeps {
                        chain = model.gibbs_sweep(chain, theta, rng)?;
                    }
                    batch.push(chain.current);
                }
                self.chain = Some(chain);
                Ok(batch)
            }
        }
    }
}

/// −dV(x_obs)/dθ + (1/m) Σ_j dV(yʲ)/dθ with the batch drawn by `sampler`.
pub fn cd_direction(
    model: &FiniteGibbsModel,
    x_obs: usize,
    theta: &ParameterVector,
    sampler: &mut CdSampler,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let batch = sampler.draw_batch(model, x_obs, theta, rng)?;
    let mut dir = model.energy_grad(x_obs, theta);
    vecops::scale(&mut dir, -1.0);
    let w = 1.0 / batch.len() as f64;
    for y in batch {
        vecops::add_scaled(&mut dir, w, &model.energy_grad(y, theta));
    }
    Ok(dir)
}

/// The m → ∞ limit of the exact-mode direction for a fixed observation:
/// −dV(x_obs)/dθ + E_p[dV/dθ].
pub fn cd_expected_direction(
    model: &FiniteGibbsModel,
    x_obs: usize,
    theta: &ParameterVector,
) -> Result<Vec<f64>> {
    let mut dir = model.energy_grad(x_obs, theta);
    vecops::scale(&mut dir, -1.0);
    let model_term = model.energy_grad_expectation(theta)?;
    vecops::add_scaled(&mut dir, 1.0, &model_term);
    Ok(dir)
}

/// d̄(θ) for exact-mode CD, enumerated over the empirical distribution and
/// the model: equals −[`exact_nll_grad`] identically.
pub fn cd_expected_direction_over_data(
    model: &FiniteGibbsModel,
    data: &DataSet,
    theta: &ParameterVector,
) -> Result<Vec<f64>> {
    let mut dir = vec![0.0; theta.dim()];
    for (i, w) in data.indices().iter().zip(data.weights()) {
        vecops::add_scaled(&mut dir, -w, &model.energy_grad(*i, theta));
    }
    let model_term = model.energy_grad_expectation(theta)?;
    vecops::add_scaled(&mut dir, 1.0, &model_term);
    Ok(dir)
}

/// d̄(θ) for CD-k, enumerated exactly through powers of the sweep transition
/// matrix: the chain is started at each observation, burned in, and the
/// collected-sample distributions averaged. Only defined for `CdK`.
pub fn cd_chain_expected_direction(
    model: &FiniteGibbsModel,
    data: &DataSet,
    config: &CdConfig,
    theta: &ParameterVector,
) -> Result<Vec<f64>> {
    let sweeps = match config.sampler_mode {
        SamplerMode::CdK { sweeps } => sweeps,
        _ => {
            return Err(SaError::InvalidConfig(
                "chain expected direction is defined for the cd_k mode only".into(),
            ))
        }
    };
    let n = model.n_states();
    let t = model.sweep_transition_matrix(theta)?;
    let t_k = mat_pow(&t, sweeps as usize);
    // average over collected members j = 1..m of T^{burn + j·k}
    let mut reach = mat_pow(&t, config.burn_in as usize);
    let mut avg = vec![vec![0.0; n]; n];
    for _ in 0..config.m {
        reach = mat_mul(&reach, &t_k);
        for (row_avg, row) in avg.iter_mut().zip(&reach) {
            vecops::add_scaled(row_avg, 1.0, row);
        }
    }
    for row in avg.iter_mut() {
        vecops::scale(row, 1.0 / config.m as f64);
    }

    let grads: Vec<Vec<f64>> = (0..n).map(|i| model.energy_grad(i, theta)).collect();
    let mut dir = vec![0.0; theta.dim()];
    for (i, w) in data.indices().iter().zip(data.weights()) {
        vecops::add_scaled(&mut dir, -w, &grads[*i]);
        for (y, p) in avg[*i].iter().enumerate() {
            vecops::add_scaled(&mut dir, w * p, &grads[y]);
        }
    }
    Ok(dir)
}

fn mat_pow(m: &[Vec<f64>], k: usize) -> Vec<Vec<f64>> {
    let n = m.len();
    let mut out: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row = vec![0.0; n];
            row[i] = 1.0;
            row
        })
        .collect();
    for _ in 0..k {
        out = mat_mul(&out, m);
    }
    out
}

/// The training source: one observation from the data lane, the model batch
/// from the model lane.
pub struct CdDirectionSource<'a> {
    model: &'a FiniteGibbsModel,
    data: &'a DataSet,
    sampler: CdSampler,
}

impl<'a> CdDirectionSource<'a> {
    pub fn new(model: &'a FiniteGibbsModel, data: &'a DataSet, config: CdConfig) -> Self {
        Self {
            model,
            data,
            sampler: CdSampler::new(config),
        }
    }
}

impl StochasticDirection for CdDirectionSource<'_> {
    fn mean_direction(
        &mut self,
        theta: &ParameterVector,
        iter: u64,
        rng: &StreamRng,
    ) -> Result<Vec<f64>> {
        let x_obs = self.data.draw(&mut rng.stream(iter, LANE_OBSERVATION));
        let mut model_lane = rng.stream(iter, LANE_MODEL);
        let dir = cd_direction(self.model, x_obs, theta, &mut self.sampler, &mut model_lane)?;
        if dir.iter().any(|v| !v.is_finite()) {
            return Err(SaError::NonFiniteDirection {
                iter,
                sample: self.model.state(x_obs).to_vec(),
            });
        }
        Ok(dir)
    }
}

/// Exact loss/gradient/expected-direction evaluation for CD training runs.
/// For the exact and persistent modes the recorded d̄ is the exact-sampler
/// expectation; for CD-k it is the enumerated chain expectation.
pub struct CdEvaluator<'a> {
    pub model: &'a FiniteGibbsModel,
    pub data: &'a DataSet,
    pub config: CdConfig,
}

impl RiskEvaluator for CdEvaluator<'_> {
    fn loss(&self, theta: &ParameterVector) -> f64 {
        exact_nll(self.model, self.data, theta).expect("finite energies during evaluation")
    }

    fn grad(&self, theta: &ParameterVector) -> Vec<f64> {
        exact_nll_grad(self.model, self.data, theta).expect("finite energies during evaluation")
    }

    fn expected_direction(&self, theta: &ParameterVector) -> Vec<f64> {
        match self.config.sampler_mode {
            SamplerMode::CdK { .. } => {
                cd_chain_expected_direction(self.model, self.data, &self.config, theta)
                    .expect("finite energies during evaluation")
            }
            _ => cd_expected_direction_over_data(self.model, self.data, theta)
                .expect("finite energies during evaluation"),
        }
    }
}

/// Runs the CD update from `initial`, recording the exact NLL and the inner
/// product g(θ)ᵀd̄(θ) at checkpoints.
pub fn train_cd(
    model: &FiniteGibbsModel,
    data: &DataSet,
    initial: &ParameterVector,
    cd_config: CdConfig,
    run_config: &RunConfig,
) -> Result<Trajectory> {
    if initial.dim() != model.param_dim() {
        return Err(SaError::DimensionMismatch {
            expected: model.param_dim(),
            got: initial.dim(),
        });
    }
    let mut source = CdDirectionSource::new(model, data, cd_config);
    let evaluator = CdEvaluator {
        model,
        data,
        config: cd_config,
    };
    run(initial, &mut source, Some(&evaluator), run_config)
}

/// Deterministic full-batch gradient descent on the exact NLL; the oracle the
/// stochastic runs are compared against.
pub fn minimize_nll_by_gradient_descent(
    model: &FiniteGibbsModel,
    data: &DataSet,
    initial: &ParameterVector,
    learning_rate: f64,
    max_iters: u64,
    grad_tol: f64,
) -> Result<(ParameterVector, f64)> {
    let mut theta = initial.clone();
    for _ in 0..max_iters {
        let g = exact_nll_grad(model, data, &theta)?;
        if vecops::max_abs(&g) < grad_tol {
            break;
        }
        let mut next = theta.to_vec();
        vecops::add_scaled(&mut next, -learning_rate, &g);
        theta = ParameterVector::new(next)?;
    }
    let nll = exact_nll(model, data, &theta)?;
    Ok((theta, nll))
}

/// The observation/model-sample pair (x_obs, y) as a single sampled object in
/// R^{2d}, for the downhill diagnostics: enumeration runs over the product of
/// the empirical distribution and the model.
pub struct CdPairSampler<'a> {
    model: &'a FiniteGibbsModel,
    data: &'a DataSet,
    bound: f64,
}

impl<'a> CdPairSampler<'a> {
    pub fn new(model: &'a FiniteGibbsModel, data: &'a DataSet) -> Self {
        let max_norm = model
            .states()
            .iter()
            .map(|s| vecops::norm(s))
            .fold(0.0f64, f64::max);
        Self {
            model,
            data,
            bound: (2.0f64).sqrt() * max_norm.max(1.0),
        }
    }
}

impl StateSampler for CdPairSampler<'_> {
    fn sample(&self, theta: &ParameterVector, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let x_obs = self.data.draw(rng);
        let y = self
            .model
            .exact_sample(theta, rng)
            .expect("finite energies during sampling");
        let mut pair = self.model.state(x_obs).to_vec();
        pair.extend_from_slice(self.model.state(y));
        pair
    }

    fn sample_bound(&self) -> f64 {
        self.bound
    }

    fn enumerate(&self, theta: &ParameterVector) -> Option<Vec<(Vec<f64>, f64)>> {
        let empirical = self.data.empirical_distribution(self.model);
        let probs = self.model.probabilities(theta).ok()?;
        let mut support = Vec::new();
        for (i, w) in empirical.iter().enumerate() {
            if *w == 0.0 {
                continue;
            }
            for (j, p) in probs.iter().enumerate() {
                let mut pair = self.model.state(i).to_vec();
                pair.extend_from_slice(self.model.state(j));
                support.push((pair, w * p));
            }
        }
        Some(support)
    }
}

/// The direction d([x_obs; y], θ) = −dV(x_obs) + dV(y) over encoded pairs.
pub struct CdPairDirection<'a> {
    pub model: &'a FiniteGibbsModel,
}

impl SearchDirection for CdPairDirection<'_> {
    fn eval(&self, x: &[f64], theta: &ParameterVector) -> Vec<f64> {
        let d = self.model.state_dim();
        let (x_obs, y) = x.split_at(d);
        let mut dir = self.model.energy_grad_state(x_obs, theta);
        vecops::scale(&mut dir, -1.0);
        let y_grad = self.model.energy_grad_state(y, theta);
        vecops::add_scaled(&mut dir, 1.0, &y_grad);
        dir
    }
}
