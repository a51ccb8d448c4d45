//! State-dependent stochastic approximation on finite sample spaces.
//!
//! The generic update is θ(t+1) = θ(t) + γ_t · d(x̃(t), θ(t)), where the
//! observation x̃(t) is drawn from a distribution p_x(· | θ(t)) that may
//! depend on the current parameter estimate. Under a positive step-size
//! sequence with Σγ_t = ∞ and Σγ_t² < ∞, a downhill expected direction
//! (g(θ)ᵀ d̄(θ) ≤ 0), and a boundedness condition, the iterates approach the
//! solution set H = {θ : g(θ)ᵀ d̄(θ) = 0}; the diagnostics in this crate
//! measure exactly those quantities.
//!
//! Everything is exercised on finite, enumerable sample spaces so that
//! expectations, normalization constants, and gradients admit exact oracles:
//!
//! - [`runner::run`] — the generic iterator with trajectory recording, a
//!   tolerance-based stop rule, and boundedness monitoring;
//! - [`gibbs`] — finite Gibbs models with exact partition functions, exact
//!   sampling, and single-site Gibbs sweeps;
//! - [`cd`] — contrastive-divergence learning against the exact
//!   maximum-likelihood gradient;
//! - [`em`] — stochastic-descent expectation maximization on Bernoulli
//!   mixtures with exact posterior imputation;
//! - [`active`] — episodic policy-gradient learning in finite environments;
//! - [`risk`] — the unified risk/gradient oracle with the passive/active
//!   gradient distinction and Hessian-bound diagnostics;
//! - [`testbeds`] — the built-in models the experiment harness exposes.

pub mod active;
pub mod cd;
pub mod diagnostics;
mod direction;
pub mod em;
mod error;
pub mod gibbs;
mod param;
pub mod risk;
mod rng;
pub mod runner;
mod schedule;
pub mod testbeds;
pub(crate) mod vecops;

pub use direction::{
    apply_step, mean_search_direction, sa_step, BoundedDirection, ConstantSampler, FiniteSampler,
    MiniBatchDirection, SearchDirection, StateSampler, StochasticDirection,
};
pub use error::{Result, SaError};
pub use param::ParameterVector;
pub use rng::{StreamRng, LANE_DIAGNOSTIC, LANE_INIT, LANE_MODEL, LANE_OBSERVATION};
pub use schedule::{ScheduleValidity, StepSizeSchedule};
