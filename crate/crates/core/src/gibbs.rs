//! Finite-sample-space Gibbs densities with exact normalization.
//!
//! p(x | θ) = exp(−V(x; θ)) / Z(θ) over an enumerated state list. Because the
//! sample space is finite, the partition function, all expectations, and
//! exact i.i.d. sampling are available, which is what makes these models the
//! enumeration-oracle backbone for the learning algorithms in this crate.

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SaError};
use crate::param::ParameterVector;
use crate::vecops;

/// An energy function V(x; θ) with its parameter gradient dV/dθ.
pub trait EnergyFn: Send + Sync {
    fn param_dim(&self) -> usize;
    fn value(&self, x: &[f64], theta: &ParameterVector) -> f64;
    fn grad(&self, x: &[f64], theta: &ParameterVector) -> Vec<f64>;
}

/// V(x; θ) = −θᵀ φ(x) for a feature map φ : R^d → R^q.
pub struct LinearEnergy {
    features: Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>,
    q: usize,
}

impl LinearEnergy {
    pub fn new(q: usize, features: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        Self {
            features: Arc::new(features),
            q,
        }
    }

    pub fn features(&self, x: &[f64]) -> Vec<f64> {
        (self.features)(x)
    }
}

impl EnergyFn for LinearEnergy {
    fn param_dim(&self) -> usize {
        self.q
    }

    fn value(&self, x: &[f64], theta: &ParameterVector) -> f64 {
        -vecops::dot(theta.as_slice(), &(self.features)(x))
    }

    fn grad(&self, x: &[f64], theta: &ParameterVector) -> Vec<f64> {
        debug_assert_eq!(theta.dim(), self.q);
        let mut f = (self.features)(x);
        vecops::scale(&mut f, -1.0);
        f
    }
}

/// θ-independent energies given per state, for hand-built test distributions.
pub struct TableEnergy {
    pub values: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub q: usize,
}

impl EnergyFn for TableEnergy {
    fn param_dim(&self) -> usize {
        self.q
    }

    fn value(&self, x: &[f64], _theta: &ParameterVector) -> f64 {
        match self.states.iter().position(|s| s == x) {
            Some(i) => self.values[i],
            None => f64::NAN,
        }
    }

    fn grad(&self, _x: &[f64], _theta: &ParameterVector) -> Vec<f64> {
        vec![0.0; self.q]
    }
}

/// Position of a single-site Gibbs chain inside the model's state list.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GibbsChainState {
    pub current: usize,
    pub steps_taken: u64,
}

impl GibbsChainState {
    pub fn new(start: usize) -> Self {
        Self {
            current: start,
            steps_taken: 0,
        }
    }
}

/// A Gibbs density over an explicit finite state list.
#[derive(Clone)]
pub struct FiniteGibbsModel {
    states: Arc<Vec<Vec<f64>>>,
    energy: Arc<dyn EnergyFn>,
    /// bit-pattern → state index, present iff every state is a 0/1 vector
    binary_index: Option<Arc<HashMap<Vec<u8>, usize>>>,
    state_dim: usize,
}

impl FiniteGibbsModel {
    pub fn new(states: Vec<Vec<f64>>, energy: Arc<dyn EnergyFn>) -> Result<Self> {
        if states.len() < 2 {
            return Err(SaError::InvalidConfig(
                "a Gibbs model needs at least 2 states".into(),
            ));
        }
        let state_dim = states[0].len();
        if state_dim == 0 {
            return Err(SaError::InvalidConfig(
                "states must have dimension >= 1".into(),
            ));
        }
        for s in &states {
            if s.len() != state_dim {
                return Err(SaError::DimensionMismatch {
                    expected: state_dim,
                    got: s.len(),
                });
            }
            if s.iter().any(|v| !v.is_finite()) {
                return Err(SaError::InvalidConfig(
                    "state entries must be finite".into(),
                ));
            }
        }
        let binary = states
            .iter()
            .all(|s| s.iter().all(|v| *v == 0.0 || *v == 1.0));
        let binary_index = if binary {
            let mut map = HashMap::with_capacity(states.len());
            for (i, s) in states.iter().enumerate() {
                let key: Vec<u8> = s.iter().map(|v| *v as u8).collect();
                map.insert(key, i);
            }
            Some(Arc::new(map))
        } else {
            None
        };
        Ok(Self {
            states: Arc::new(states),
            energy,
            binary_index,
            state_dim,
        })
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn param_dim(&self) -> usize {
        self.energy.param_dim()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i]
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn is_binary(&self) -> bool {
        self.binary_index.is_some()
    }

    pub fn state_index(&self, x: &[f64]) -> Result<usize> {
        self.states
            .iter()
            .position(|s| s == x)
            .ok_or_else(|| SaError::StateNotInSupport { state: x.to_vec() })
    }

    pub fn energy_value(&self, i: usize, theta: &ParameterVector) -> f64 {
        self.energy.value(&self.states[i], theta)
    }

    pub fn energy_grad(&self, i: usize, theta: &ParameterVector) -> Vec<f64> {
        self.energy.grad(&self.states[i], theta)
    }

    /// dV/dθ at an explicit state vector (membership is not checked).
    pub fn energy_grad_state(&self, x: &[f64], theta: &ParameterVector) -> Vec<f64> {
        self.energy.grad(x, theta)
    }

    /// All energies, with a hard error naming the first non-finite state.
    pub fn energies(&self, theta: &ParameterVector) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.n_states());
        for (i, s) in self.states.iter().enumerate() {
            let v = self.energy.value(s, theta);
            if !v.is_finite() {
                return Err(SaError::NonFiniteEnergy { state_index: i });
            }
            out.push(v);
        }
        Ok(out)
    }

    /// log Z(θ) via a max-shift over −V, safe against overflow.
    pub fn log_partition(&self, theta: &ParameterVector) -> Result<f64> {
        let energies = self.energies(theta)?;
        let neg: Vec<f64> = energies.iter().map(|v| -v).collect();
        Ok(vecops::log_sum_exp(&neg))
    }

    /// Z(θ) = Σ_x exp(−V(x; θ)).
    pub fn partition_function(&self, theta: &ParameterVector) -> Result<f64> {
        Ok(self.log_partition(theta)?.exp())
    }

    /// The probability vector (exp(−V(x)) / Z)_x over the state list.
    pub fn probabilities(&self, theta: &ParameterVector) -> Result<Vec<f64>> {
        let energies = self.energies(theta)?;
        let neg: Vec<f64> = energies.iter().map(|v| -v).collect();
        let lse = vecops::log_sum_exp(&neg);
        Ok(neg.iter().map(|e| (e - lse).exp()).collect())
    }

    /// p(x | θ); `x` must be a member of the state list.
    pub fn density(&self, x: &[f64], theta: &ParameterVector) -> Result<f64> {
        let i = self.state_index(x)?;
        self.density_by_index(i, theta)
    }

    pub fn density_by_index(&self, i: usize, theta: &ParameterVector) -> Result<f64> {
        let energies = self.energies(theta)?;
        let neg: Vec<f64> = energies.iter().map(|v| -v).collect();
        let lse = vecops::log_sum_exp(&neg);
        Ok((neg[i] - lse).exp())
    }

    /// Σ_x f(x) p(x | θ).
    pub fn exact_expectation(
        &self,
        theta: &ParameterVector,
        f: impl Fn(&[f64]) -> Vec<f64>,
    ) -> Result<Vec<f64>> {
        let probs = self.probabilities(theta)?;
        let mut acc: Option<Vec<f64>> = None;
        for (s, p) in self.states.iter().zip(&probs) {
            let v = f(s);
            match acc.as_mut() {
                None => {
                    let mut first = v;
                    vecops::scale(&mut first, *p);
                    acc = Some(first);
                }
                Some(a) => vecops::add_scaled(a, *p, &v),
            }
        }
        Ok(acc.expect("model has at least two states"))
    }

    /// E_p[dV/dθ], the model term of the likelihood gradient.
    pub fn energy_grad_expectation(&self, theta: &ParameterVector) -> Result<Vec<f64>> {
        let probs = self.probabilities(theta)?;
        let mut acc = vec![0.0; self.param_dim()];
        for (i, p) in probs.iter().enumerate() {
            vecops::add_scaled(&mut acc, *p, &self.energy.grad(&self.states[i], theta));
        }
        Ok(acc)
    }

    /// An exact inverse-CDF draw; returns the state index.
    pub fn exact_sample(&self, theta: &ParameterVector, rng: &mut ChaCha8Rng) -> Result<usize> {
        let probs = self.probabilities(theta)?;
        let u: f64 = rng.random();
        Ok(vecops::categorical_draw(&probs, u))
    }

    fn flipped_index(
        &self,
        index: &HashMap<Vec<u8>, usize>,
        from: usize,
        site: usize,
        bit: u8,
    ) -> Result<usize> {
        let mut key: Vec<u8> = self.states[from].iter().map(|v| *v as u8).collect();
        key[site] = bit;
        index
            .get(&key)
            .copied()
            .ok_or_else(|| SaError::StateNotInSupport {
                state: key.iter().map(|b| *b as f64).collect(),
            })
    }

    /// One full systematic sweep of single-site conditional resampling
    /// (site 0, 1, …, d−1). Defined only for binary state spaces whose list
    /// contains every visited pattern; the invariant distribution is
    /// p(· | θ).
    pub fn gibbs_sweep(
        &self,
        chain: GibbsChainState,
        theta: &ParameterVector,
        rng: &mut ChaCha8Rng,
    ) -> Result<GibbsChainState> {
        let index = self
            .binary_index
            .as_ref()
            .ok_or(SaError::NonBinaryStateSpace)?
            .clone();
        let mut current = chain.current;
        for site in 0..self.state_dim {
            current = self.resample_site(&index, current, site, theta, rng)?;
        }
        Ok(GibbsChainState {
            current,
            steps_taken: chain.steps_taken + 1,
        })
    }

    /// Resample one site from its exact conditional; the elementary kernel
    /// of the sweep, exposed because it (unlike the composed sweep) is
    /// reversible with respect to p(· | θ).
    pub fn gibbs_site_update(
        &self,
        chain: GibbsChainState,
        site: usize,
        theta: &ParameterVector,
        rng: &mut ChaCha8Rng,
    ) -> Result<GibbsChainState> {
        let index = self
            .binary_index
            .as_ref()
            .ok_or(SaError::NonBinaryStateSpace)?
            .clone();
        let current = self.resample_site(&index, chain.current, site, theta, rng)?;
        Ok(GibbsChainState {
            current,
            steps_taken: chain.steps_taken + 1,
        })
    }

    fn resample_site(
        &self,
        index: &HashMap<Vec<u8>, usize>,
        from: usize,
        site: usize,
        theta: &ParameterVector,
        rng: &mut ChaCha8Rng,
    ) -> Result<usize> {
        let zero = self.flipped_index(index, from, site, 0)?;
        let one = self.flipped_index(index, from, site, 1)?;
        let e0 = self.energy.value(&self.states[zero], theta);
        let e1 = self.energy.value(&self.states[one], theta);
        if !e0.is_finite() {
            return Err(SaError::NonFiniteEnergy { state_index: zero });
        }
        if !e1.is_finite() {
            return Err(SaError::NonFiniteEnergy { state_index: one });
        }
        // p(x_site = 1 | rest) = σ(e0 − e1) for energies V.
        let p_one = vecops::sigmoid(e0 - e1);
        let u: f64 = rng.random();
        Ok(if u < p_one { one } else { zero })
    }

    /// The row-stochastic transition matrix of one full systematic sweep.
    /// Rows index the starting state. Used to enumerate the exact
    /// distribution of finite-step chains.
    pub fn sweep_transition_matrix(&self, theta: &ParameterVector) -> Result<Vec<Vec<f64>>> {
        let index = self
            .binary_index
            .as_ref()
            .ok_or(SaError::NonBinaryStateSpace)?
            .clone();
        let n = self.n_states();
        // identity
        let mut t: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut row = vec![0.0; n];
                row[i] = 1.0;
                row
            })
            .collect();
        for site in 0..self.state_dim {
            let mut site_kernel: Vec<Vec<f64>> = vec![vec![0.0; n]; n];
            for from in 0..n {
                let zero = self.flipped_index(&index, from, site, 0)?;
                let one = self.flipped_index(&index, from, site, 1)?;
                let e0 = self.energy.value(&self.states[zero], theta);
                let e1 = self.energy.value(&self.states[one], theta);
                let p_one = vecops::sigmoid(e0 - e1);
                site_kernel[from][one] += p_one;
                site_kernel[from][zero] += 1.0 - p_one;
            }
            t = mat_mul(&t, &site_kernel);
        }
        Ok(t)
    }
}

/// A Gibbs model as a state-dependent sampler: x̃ ~ p(· | θ) by exact
/// inverse-CDF draws, with the full support exposed for exact-mode
/// diagnostics. The sample bound is the largest state norm, so the
/// boundedness condition on the observations holds by construction.
#[derive(Clone)]
pub struct GibbsSampler {
    model: FiniteGibbsModel,
    bound: f64,
}

impl GibbsSampler {
    pub fn new(model: FiniteGibbsModel) -> Self {
        let bound = model
            .states()
            .iter()
            .map(|s| vecops::norm(s))
            .fold(0.0f64, f64::max)
            .max(1.0);
        Self { model, bound }
    }

    pub fn model(&self) -> &FiniteGibbsModel {
        &self.model
    }
}

impl crate::direction::StateSampler for GibbsSampler {
    fn sample(&self, theta: &ParameterVector, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let i = self
            .model
            .exact_sample(theta, rng)
            .expect("finite energies during sampling");
        self.model.state(i).to_vec()
    }

    fn sample_bound(&self) -> f64 {
        self.bound
    }

    fn enumerate(&self, theta: &ParameterVector) -> Option<Vec<(Vec<f64>, f64)>> {
        let probs = self.model.probabilities(theta).ok()?;
        Some(self.model.states().iter().cloned().zip(probs).collect())
    }
}

pub(crate) fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let m = b[0].len();
    let inner = b.len();
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for k in 0..inner {
            let aik = a[i][k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..m {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

/// All 2^d binary vectors; index i has bit r of i at coordinate r.
pub fn binary_states(d: usize) -> Vec<Vec<f64>> {
    assert!(
        d <= 24,
        "binary state spaces above 2^24 are not enumerable here"
    );
    (0..(1usize << d))
        .map(|i| (0..d).map(|r| ((i >> r) & 1) as f64).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{StreamRng, LANE_DIAGNOSTIC};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// 2-variable pairwise model used across the module tests: φ = (x1, x2, x1·x2).
    pub(crate) fn two_var_model() -> FiniteGibbsModel {
        let energy = LinearEnergy::new(3, |x: &[f64]| vec![x[0], x[1], x[0] * x[1]]);
        FiniteGibbsModel::new(binary_states(2), Arc::new(energy)).unwrap()
    }

    fn two_state_skewed() -> FiniteGibbsModel {
        // V(x1) = 0, V(x2) = ln 3 → Z = 1 + 1/3 = 4/3, p = (3/4, 1/4).
        let states = vec![vec![0.0], vec![1.0]];
        let energy = TableEnergy {
            values: vec![0.0, 3.0f64.ln()],
            states: states.clone(),
            q: 1,
        };
        FiniteGibbsModel::new(states, Arc::new(energy)).unwrap()
    }

    #[test]
    fn uniform_partition_function_counts_states() {
        let model = FiniteGibbsModel::new(
            binary_states(4),
            Arc::new(LinearEnergy::new(4, |x: &[f64]| x.to_vec())),
        )
        .unwrap();
        let theta = ParameterVector::zeros(4).unwrap();
        assert_relative_eq!(
            model.partition_function(&theta).unwrap(),
            16.0,
            epsilon = 1e-12
        );
        for i in 0..16 {
            assert_relative_eq!(
                model.density_by_index(i, &theta).unwrap(),
                1.0 / 16.0,
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn skewed_two_state_model_hand_values() {
        let model = two_state_skewed();
        let theta = ParameterVector::zeros(1).unwrap();
        assert_relative_eq!(
            model.partition_function(&theta).unwrap(),
            4.0 / 3.0,
            epsilon = 1e-14
        );
        assert_relative_eq!(
            model.density(&[0.0], &theta).unwrap(),
            0.75,
            epsilon = 1e-14
        );
        assert_relative_eq!(
            model.density(&[1.0], &theta).unwrap(),
            0.25,
            epsilon = 1e-14
        );
    }

    #[test]
    fn density_rejects_foreign_states() {
        let model = two_state_skewed();
        let theta = ParameterVector::zeros(1).unwrap();
        assert!(matches!(
            model.density(&[2.0], &theta),
            Err(SaError::StateNotInSupport { .. })
        ));
    }

    #[test]
    fn non_finite_energy_names_the_state() {
        let states = vec![vec![0.0], vec![1.0]];
        let energy = TableEnergy {
            values: vec![0.0, f64::INFINITY],
            states: states.clone(),
            q: 1,
        };
        let model = FiniteGibbsModel::new(states, Arc::new(energy)).unwrap();
        let theta = ParameterVector::zeros(1).unwrap();
        match model.partition_function(&theta) {
            Err(SaError::NonFiniteEnergy { state_index }) => assert_eq!(state_index, 1),
            other => panic!("expected NonFiniteEnergy, got {other:?}"),
        }
    }

    #[test]
    fn constant_energy_shift_leaves_density_unchanged() {
        let model = two_var_model();
        let shifted = FiniteGibbsModel::new(
            binary_states(2),
            Arc::new(ShiftedEnergy {
                inner: LinearEnergy::new(3, |x: &[f64]| vec![x[0], x[1], x[0] * x[1]]),
                shift: 125.0,
            }),
        )
        .unwrap();
        let theta = ParameterVector::new(vec![0.3, -0.7, 0.9]).unwrap();
        for i in 0..4 {
            assert_relative_eq!(
                model.density_by_index(i, &theta).unwrap(),
                shifted.density_by_index(i, &theta).unwrap(),
                epsilon = 1e-12
            );
        }
    }

    struct ShiftedEnergy {
        inner: LinearEnergy,
        shift: f64,
    }
    impl EnergyFn for ShiftedEnergy {
        fn param_dim(&self) -> usize {
            self.inner.param_dim()
        }
        fn value(&self, x: &[f64], theta: &ParameterVector) -> f64 {
            self.inner.value(x, theta) + self.shift
        }
        fn grad(&self, x: &[f64], theta: &ParameterVector) -> Vec<f64> {
            self.inner.grad(x, theta)
        }
    }

    #[test]
    fn expectation_of_constant_is_constant() {
        let model = two_var_model();
        let theta = ParameterVector::new(vec![0.5, -0.2, 0.1]).unwrap();
        let e = model
            .exact_expectation(&theta, |_x| vec![7.0, -1.0])
            .unwrap();
        assert_relative_eq!(e[0], 7.0, epsilon = 1e-12);
        assert_relative_eq!(e[1], -1.0, epsilon = 1e-12);
    }

    #[test]
    fn uniform_binary_expectation_is_half() {
        let model = FiniteGibbsModel::new(
            binary_states(4),
            Arc::new(LinearEnergy::new(4, |x: &[f64]| x.to_vec())),
        )
        .unwrap();
        let theta = ParameterVector::zeros(4).unwrap();
        let e = model.exact_expectation(&theta, |x| x.to_vec()).unwrap();
        for v in e {
            assert_relative_eq!(v, 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn skewed_indicator_expectation() {
        let model = two_state_skewed();
        let theta = ParameterVector::zeros(1).unwrap();
        let e = model
            .exact_expectation(&theta, |x| vec![if x[0] == 0.0 { 1.0 } else { 0.0 }])
            .unwrap();
        assert_relative_eq!(e[0], 0.75, epsilon = 1e-14);
    }

    #[test]
    fn exact_sample_frequencies_match_density() {
        let model = two_state_skewed();
        let theta = ParameterVector::zeros(1).unwrap();
        let mut rng = StreamRng::new(11).stream(0, LANE_DIAGNOSTIC);
        let n = 100_000;
        let mut count0 = 0usize;
        for _ in 0..n {
            if model.exact_sample(&theta, &mut rng).unwrap() == 0 {
                count0 += 1;
            }
        }
        let freq = count0 as f64 / n as f64;
        let se = (0.75 * 0.25 / n as f64).sqrt();
        assert!((freq - 0.75).abs() <= 4.0 * se, "freq {freq}");
    }

    #[test]
    fn near_deterministic_model_always_draws_dominant_state() {
        let states = vec![vec![0.0], vec![1.0], vec![2.0]];
        let energy = TableEnergy {
            values: vec![50.0, -50.0, 50.0],
            states: states.clone(),
            q: 1,
        };
        let model = FiniteGibbsModel::new(states, Arc::new(energy)).unwrap();
        let theta = ParameterVector::zeros(1).unwrap();
        let mut rng = StreamRng::new(5).stream(0, LANE_DIAGNOSTIC);
        for _ in 0..1000 {
            assert_eq!(model.exact_sample(&theta, &mut rng).unwrap(), 1);
        }
    }

    #[test]
    fn exact_sample_is_deterministic_in_rng_state() {
        let model = two_var_model();
        let theta = ParameterVector::new(vec![0.2, 0.4, -0.6]).unwrap();
        let a = model
            .exact_sample(&theta, &mut StreamRng::new(3).stream(7, LANE_DIAGNOSTIC))
            .unwrap();
        let b = model
            .exact_sample(&theta, &mut StreamRng::new(3).stream(7, LANE_DIAGNOSTIC))
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sweep_requires_binary_states() {
        let model = two_state_skewed(); // states {0, 1} in R^1: binary, sweep OK
        assert!(model.is_binary());
        let states = vec![vec![0.5], vec![1.5]];
        let energy = TableEnergy {
            values: vec![0.0, 0.0],
            states: states.clone(),
            q: 1,
        };
        let nonbinary = FiniteGibbsModel::new(states, Arc::new(energy)).unwrap();
        let theta = ParameterVector::zeros(1).unwrap();
        let mut rng = StreamRng::new(1).stream(0, LANE_DIAGNOSTIC);
        assert!(matches!(
            nonbinary.gibbs_sweep(GibbsChainState::new(0), &theta, &mut rng),
            Err(SaError::NonBinaryStateSpace)
        ));
    }

    #[test]
    fn zero_energy_sweep_is_fair_coin_per_site() {
        let model = FiniteGibbsModel::new(
            binary_states(2),
            Arc::new(LinearEnergy::new(3, |x: &[f64]| {
                vec![x[0], x[1], x[0] * x[1]]
            })),
        )
        .unwrap();
        let theta = ParameterVector::zeros(3).unwrap();
        let mut rng = StreamRng::new(21).stream(0, LANE_DIAGNOSTIC);
        let n = 40_000;
        let mut ones = [0usize; 2];
        let mut chain = GibbsChainState::new(0);
        for _ in 0..n {
            chain = model.gibbs_sweep(chain, &theta, &mut rng).unwrap();
            let s = model.state(chain.current);
            for (r, v) in s.iter().enumerate() {
                if *v == 1.0 {
                    ones[r] += 1;
                }
            }
        }
        for count in ones {
            let freq = count as f64 / n as f64;
            let se = (0.25f64 / n as f64).sqrt();
            assert!((freq - 0.5).abs() <= 5.0 * se, "freq {freq}");
        }
    }

    #[test]
    fn long_run_occupancy_matches_exact_density() {
        let model = two_var_model();
        let theta = ParameterVector::new(vec![0.4, -0.3, 0.6]).unwrap();
        let probs = model.probabilities(&theta).unwrap();
        let mut rng = StreamRng::new(33).stream(0, LANE_DIAGNOSTIC);
        let n = 100_000;
        let mut counts = vec![0usize; model.n_states()];
        let mut chain = GibbsChainState::new(0);
        for _ in 0..n {
            chain = model.gibbs_sweep(chain, &theta, &mut rng).unwrap();
            counts[chain.current] += 1;
        }
        for (i, p) in probs.iter().enumerate() {
            let freq = counts[i] as f64 / n as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            // correlated draws inflate the error; 6 i.i.d. SEs leaves room on
            // this fast-mixing model
            assert!(
                (freq - p).abs() <= 6.0 * se,
                "state {i}: freq {freq} vs p {p}"
            );
        }
        assert_eq!(chain.steps_taken, n as u64);
    }

    #[test]
    fn chain_finds_dominant_state_quickly() {
        // Strong field on both units: state (1, 1) carries almost all mass.
        let model = two_var_model();
        let theta = ParameterVector::new(vec![6.0, 6.0, 0.0]).unwrap();
        let probs = model.probabilities(&theta).unwrap();
        let dominant = 3; // bits (1, 1)
        assert!(probs[dominant] > 0.99);
        let mut rng = StreamRng::new(8).stream(0, LANE_DIAGNOSTIC);
        let mut chain = GibbsChainState::new(0);
        let mut hits = 0usize;
        for _ in 0..100 {
            chain = model.gibbs_sweep(chain, &theta, &mut rng).unwrap();
            if chain.current == dominant {
                hits += 1;
            }
        }
        assert!(hits as f64 / 100.0 > 0.99, "hits {hits}");
    }

    #[test]
    fn site_kernel_satisfies_detailed_balance_empirically() {
        // π(a) P_r(a→b) = π(b) P_r(b→a) for the single-site kernel; estimated
        // from transition frequencies out of stationary starts.
        let model = two_var_model();
        let theta = ParameterVector::new(vec![0.5, -0.4, 0.8]).unwrap();
        let probs = model.probabilities(&theta).unwrap();
        let n = 200_000;
        let mut rng = StreamRng::new(55).stream(0, LANE_DIAGNOSTIC);
        let site = 0;
        let mut flow = vec![vec![0.0f64; 4]; 4];
        for _ in 0..n {
            let from = model.exact_sample(&theta, &mut rng).unwrap();
            let chain = model
                .gibbs_site_update(GibbsChainState::new(from), site, &theta, &mut rng)
                .unwrap();
            flow[from][chain.current] += 1.0;
        }
        for a in 0..4 {
            for b in 0..4 {
                if a == b {
                    continue;
                }
                let fwd = flow[a][b] / n as f64; // estimates π(a)P(a→b)
                let bwd = flow[b][a] / n as f64;
                let se = ((fwd + bwd).max(1.0 / n as f64) / n as f64).sqrt();
                assert!(
                    (fwd - bwd).abs() <= 5.0 * se,
                    "flow {a}->{b}: {fwd} vs {bwd}"
                );
            }
        }
        let _ = probs;
    }

    #[test]
    fn sweep_matrix_rows_are_stochastic_and_fix_the_density() {
        let model = two_var_model();
        let theta = ParameterVector::new(vec![0.5, -0.4, 0.8]).unwrap();
        let t = model.sweep_transition_matrix(&theta).unwrap();
        for row in &t {
            assert_relative_eq!(row.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
        // πT = π
        let probs = model.probabilities(&theta).unwrap();
        for j in 0..4 {
            let pushed: f64 = (0..4).map(|i| probs[i] * t[i][j]).sum();
            assert_relative_eq!(pushed, probs[j], epsilon = 1e-12);
        }
    }

    /// ∇θ log Z = −E_p[dV/dθ], cross-checked against finite differences.
    #[test]
    fn log_partition_gradient_identity() {
        let model = two_var_model();
        let theta = ParameterVector::new(vec![0.25, -0.5, 0.75]).unwrap();
        let analytic: Vec<f64> = model
            .energy_grad_expectation(&theta)
            .unwrap()
            .iter()
            .map(|v| -v)
            .collect();
        for i in 0..3 {
            let h = 1e-5 * theta[i].abs().max(1.0);
            let mut plus = theta.to_vec();
            plus[i] += h;
            let mut minus = theta.to_vec();
            minus[i] -= h;
            let fd = (model
                .log_partition(&ParameterVector::new(plus).unwrap())
                .unwrap()
                - model
                    .log_partition(&ParameterVector::new(minus).unwrap())
                    .unwrap())
                / (2.0 * h);
            let denom = analytic[i].abs().max(1e-8);
            assert!(
                ((fd - analytic[i]) / denom).abs() < 1e-6,
                "component {i}: fd {fd} vs analytic {}",
                analytic[i]
            );
        }
    }

    proptest! {
        /// Σ_x p(x | θ) = 1 within 1e−12 across random parameters.
        #[test]
        fn probabilities_normalize(
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
            c in -3.0f64..3.0,
        ) {
            let model = two_var_model();
            let theta = ParameterVector::new(vec![a, b, c]).unwrap();
            let probs = model.probabilities(&theta).unwrap();
            let total: f64 = probs.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }
}
