//! Search directions, state-dependent samplers, and the mini-batch update.

use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SaError};
use crate::param::ParameterVector;
use crate::rng::{StreamRng, LANE_MODEL};
use crate::schedule::StepSizeSchedule;
use crate::vecops;

/// A search direction function d : R^d × R^q → R^q.
///
/// The convergence analysis additionally assumes d is piecewise continuous on
/// a finite partition in its first argument and continuous in its second.
/// That property cannot be checked mechanically and is the caller's
/// obligation; what the iterator does enforce at runtime is finiteness of
/// every output and the declared bound, when one is given.
pub trait SearchDirection {
    fn eval(&self, x: &[f64], theta: &ParameterVector) -> Vec<f64>;

    /// Declared bound K_d with |d(x, θ)| ≤ K_d, or `None` for unbounded.
    fn bound(&self) -> Option<f64> {
        None
    }
}

impl<F> SearchDirection for F
where
    F: Fn(&[f64], &ParameterVector) -> Vec<f64>,
{
    fn eval(&self, x: &[f64], theta: &ParameterVector) -> Vec<f64> {
        self(x, theta)
    }
}

/// Attaches a declared bound K_d to a direction; the bound is asserted on
/// every evaluation made by the iterator.
pub struct BoundedDirection<D> {
    pub inner: D,
    pub k_d: f64,
}

impl<D: SearchDirection> SearchDirection for BoundedDirection<D> {
    fn eval(&self, x: &[f64], theta: &ParameterVector) -> Vec<f64> {
        self.inner.eval(x, theta)
    }

    fn bound(&self) -> Option<f64> {
        Some(self.k_d)
    }
}

/// A sampler for the state-dependent observation x̃ ~ p_x(· | θ).
///
/// Implementations must be deterministic in `(θ, rng state)` and declare a
/// bound K with |x| ≤ K for every drawn sample; the bound is asserted by the
/// iterator. Finite-support samplers may additionally expose their exact
/// distribution through [`StateSampler::enumerate`], which unlocks exact-mode
/// diagnostics.
pub trait StateSampler {
    fn sample(&self, theta: &ParameterVector, rng: &mut ChaCha8Rng) -> Vec<f64>;

    /// Declared bound K on |x|.
    fn sample_bound(&self) -> f64;

    /// The full support with probabilities, when finite and enumerable.
    fn enumerate(&self, _theta: &ParameterVector) -> Option<Vec<(Vec<f64>, f64)>> {
        None
    }
}

/// A sampler that returns a fixed point regardless of θ (a degenerate
/// passive environment, handy for deterministic testbeds).
#[derive(Clone, Debug)]
pub struct ConstantSampler {
    pub value: Vec<f64>,
}

impl StateSampler for ConstantSampler {
    fn sample(&self, _theta: &ParameterVector, _rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.value.clone()
    }

    fn sample_bound(&self) -> f64 {
        vecops::norm(&self.value).max(1.0)
    }

    fn enumerate(&self, _theta: &ParameterVector) -> Option<Vec<(Vec<f64>, f64)>> {
        Some(vec![(self.value.clone(), 1.0)])
    }
}

/// A θ-free sampler over an explicit finite support (the passive case).
#[derive(Clone, Debug)]
pub struct FiniteSampler {
    states: Vec<Vec<f64>>,
    probs: Vec<f64>,
    bound: f64,
}

impl FiniteSampler {
    pub fn new(states: Vec<Vec<f64>>, probs: Vec<f64>) -> Result<Self> {
        if states.is_empty() || states.len() != probs.len() {
            return Err(SaError::InvalidConfig(
                "finite sampler needs matching, nonempty states and probabilities".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if probs.iter().any(|p| *p < 0.0) || (total - 1.0).abs() > 1e-12 {
            return Err(SaError::InvalidConfig(
                "finite sampler probabilities must be nonnegative and sum to 1".into(),
            ));
        }
        let bound = states
            .iter()
            .map(|s| vecops::norm(s))
            .fold(0.0f64, f64::max);
        Ok(Self {
            states,
            probs,
            bound: bound.max(1.0),
        })
    }

    pub fn uniform(states: Vec<Vec<f64>>) -> Result<Self> {
        let n = states.len();
        Self::new(states, vec![1.0 / n as f64; n])
    }
}

impl StateSampler for FiniteSampler {
    fn sample(&self, _theta: &ParameterVector, rng: &mut ChaCha8Rng) -> Vec<f64> {
        use rand::Rng;
        let u: f64 = rng.random();
        self.states[vecops::categorical_draw(&self.probs, u)].clone()
    }

    fn sample_bound(&self) -> f64 {
        self.bound
    }

    fn enumerate(&self, _theta: &ParameterVector) -> Option<Vec<(Vec<f64>, f64)>> {
        Some(
            self.states
                .iter()
                .cloned()
                .zip(self.probs.iter().copied())
                .collect(),
        )
    }
}

/// θ' = θ + γ · d̂. A zero step size is an exact no-op.
pub fn apply_step(
    theta: &ParameterVector,
    gamma: f64,
    mean_direction: &[f64],
) -> Result<ParameterVector> {
    if mean_direction.len() != theta.dim() {
        return Err(SaError::DimensionMismatch {
            expected: theta.dim(),
            got: mean_direction.len(),
        });
    }
    let mut next = theta.to_vec();
    vecops::add_scaled(&mut next, gamma, mean_direction);
    ParameterVector::new(next)
}

/// Draws `m` samples at the current θ and averages the direction over them,
/// enforcing the sampler bound, the direction bound, and finiteness.
pub fn mean_search_direction(
    direction: &dyn SearchDirection,
    sampler: &dyn StateSampler,
    theta: &ParameterVector,
    m: u32,
    iter: u64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(SaError::InvalidConfig(
            "mini-batch size m must be >= 1".into(),
        ));
    }
    let mut acc = vec![0.0; theta.dim()];
    let k_x = sampler.sample_bound();
    let k_d = direction.bound();
    for _ in 0..m {
        let x = sampler.sample(theta, rng);
        let x_norm = vecops::norm(&x);
        if x_norm > k_x {
            return Err(SaError::SampleBoundViolation {
                iter,
                norm: x_norm,
                bound: k_x,
            });
        }
        let d = direction.eval(&x, theta);
        if d.len() != theta.dim() {
            return Err(SaError::DimensionMismatch {
                expected: theta.dim(),
                got: d.len(),
            });
        }
        if d.iter().any(|v| !v.is_finite()) {
            return Err(SaError::NonFiniteDirection { iter, sample: x });
        }
        if let Some(bound) = k_d {
            let d_norm = vecops::norm(&d);
            if d_norm > bound {
                return Err(SaError::DirectionBoundViolation {
                    iter,
                    norm: d_norm,
                    bound,
                });
            }
        }
        vecops::add_scaled(&mut acc, 1.0, &d);
    }
    vecops::scale(&mut acc, 1.0 / m as f64);
    Ok(acc)
}

/// One mini-batch update: θ + (γ_k / m) Σ_j d(xʲ, θ) with xʲ ~ p_x(· | θ).
///
/// Deterministic given the stream seed: iteration `k` reads only its own
/// model lane.
pub fn sa_step(
    theta: &ParameterVector,
    k: u64,
    schedule: &StepSizeSchedule,
    direction: &dyn SearchDirection,
    sampler: &dyn StateSampler,
    m: u32,
    rng: &StreamRng,
) -> Result<ParameterVector> {
    let mut lane = rng.stream(k, LANE_MODEL);
    let mean = mean_search_direction(direction, sampler, theta, m, k, &mut lane)?;
    apply_step(theta, schedule.step_size(k), &mean)
        .map_err(|_| SaError::NonFiniteIterate { iter: k })
}

/// The per-iteration direction supplier driven by [`crate::runner::run`].
///
/// The canonical instance is [`MiniBatchDirection`]; the algorithm modules
/// provide sources whose draw structure does not fit the plain
/// sampler-plus-direction shape (one observation with several model samples,
/// a persistent chain, and so on).
pub trait StochasticDirection {
    fn mean_direction(
        &mut self,
        theta: &ParameterVector,
        iter: u64,
        rng: &StreamRng,
    ) -> Result<Vec<f64>>;
}

/// The generic mini-batch source: m i.i.d. draws from `sampler`, directions
/// averaged.
pub struct MiniBatchDirection<D, S> {
    pub direction: D,
    pub sampler: S,
    pub m: u32,
}

impl<D: SearchDirection, S: StateSampler> StochasticDirection for MiniBatchDirection<D, S> {
    fn mean_direction(
        &mut self,
        theta: &ParameterVector,
        iter: u64,
        rng: &StreamRng,
    ) -> Result<Vec<f64>> {
        let mut lane = rng.stream(iter, LANE_MODEL);
        mean_search_direction(
            &self.direction,
            &self.sampler,
            theta,
            self.m,
            iter,
            &mut lane,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn theta1(v: f64) -> ParameterVector {
        ParameterVector::new(vec![v]).unwrap()
    }

    #[test]
    fn zero_direction_leaves_theta_unchanged() {
        let theta = ParameterVector::new(vec![1.5, -2.0]).unwrap();
        let d = |_x: &[f64], t: &ParameterVector| vec![0.0; t.dim()];
        let sampler = ConstantSampler { value: vec![0.0] };
        let s = StepSizeSchedule::constant(0.7).unwrap();
        let next = sa_step(&theta, 0, &s, &d, &sampler, 1, &StreamRng::new(1)).unwrap();
        assert_eq!(next, theta);
    }

    #[test]
    fn zero_gamma_freezes_theta_exactly() {
        let theta = ParameterVector::new(vec![0.0, 3.25, -1.0]).unwrap();
        let next = apply_step(&theta, 0.0, &[10.0, -4.0, 0.5]).unwrap();
        assert_eq!(next, theta);
    }

    #[test]
    fn constant_sample_single_step() {
        // θ' = 0 + 0.5 · 2 = 1
        let theta = theta1(0.0);
        let s = StepSizeSchedule::constant(0.5).unwrap();
        let d = |x: &[f64], _t: &ParameterVector| vec![x[0]];
        let sampler = ConstantSampler { value: vec![2.0] };
        let next = sa_step(&theta, 0, &s, &d, &sampler, 1, &StreamRng::new(1)).unwrap();
        assert_relative_eq!(next[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn minibatch_averages_the_stream() {
        // fixed stream (1, 2, 3, 4), γ = 1, m = 4 → θ' = mean = 2.5
        struct StreamOfFour(std::cell::Cell<usize>);
        impl StateSampler for StreamOfFour {
            fn sample(&self, _t: &ParameterVector, _r: &mut ChaCha8Rng) -> Vec<f64> {
                let i = self.0.get();
                self.0.set(i + 1);
                vec![(i + 1) as f64]
            }
            fn sample_bound(&self) -> f64 {
                4.0
            }
        }
        let theta = theta1(0.0);
        let s = StepSizeSchedule::constant(1.0).unwrap();
        let d = |x: &[f64], _t: &ParameterVector| vec![x[0]];
        let sampler = StreamOfFour(std::cell::Cell::new(0));
        let next = sa_step(&theta, 0, &s, &d, &sampler, 4, &StreamRng::new(1)).unwrap();
        assert_relative_eq!(next[0], 2.5, epsilon = 1e-15);
    }

    #[test]
    fn non_finite_direction_names_the_sample() {
        let theta = theta1(0.0);
        let s = StepSizeSchedule::constant(1.0).unwrap();
        let d = |_x: &[f64], _t: &ParameterVector| vec![f64::NAN];
        let sampler = ConstantSampler { value: vec![2.0] };
        let err = sa_step(&theta, 5, &s, &d, &sampler, 1, &StreamRng::new(1)).unwrap_err();
        match err {
            SaError::NonFiniteDirection { iter, sample } => {
                assert_eq!(iter, 5);
                assert_eq!(sample, vec![2.0]);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn sampler_bound_violation_is_a_hard_error() {
        struct Liar;
        impl StateSampler for Liar {
            fn sample(&self, _t: &ParameterVector, _r: &mut ChaCha8Rng) -> Vec<f64> {
                vec![100.0]
            }
            fn sample_bound(&self) -> f64 {
                1.0
            }
        }
        let theta = theta1(0.0);
        let s = StepSizeSchedule::constant(1.0).unwrap();
        let d = |x: &[f64], _t: &ParameterVector| vec![x[0]];
        let err = sa_step(&theta, 0, &s, &d, &Liar, 1, &StreamRng::new(1)).unwrap_err();
        assert!(matches!(err, SaError::SampleBoundViolation { .. }));
    }

    #[test]
    fn direction_bound_is_enforced() {
        let theta = theta1(0.0);
        let s = StepSizeSchedule::constant(1.0).unwrap();
        let d = BoundedDirection {
            inner: |x: &[f64], _t: &ParameterVector| vec![x[0] * 10.0],
            k_d: 1.0,
        };
        let sampler = ConstantSampler { value: vec![2.0] };
        let err = sa_step(&theta, 0, &s, &d, &sampler, 1, &StreamRng::new(1)).unwrap_err();
        assert!(matches!(err, SaError::DirectionBoundViolation { .. }));
    }
}
