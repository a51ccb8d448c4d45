//! The built-in desk-scale models behind the experiment harness registry:
//! two passive testbeds (quadratic, logistic), the 4-unit Boltzmann model,
//! the 2-component/6-visible Bernoulli mixture, and the 3-state/2-action
//! active environment. All sample spaces are small enough to enumerate, so
//! every testbed comes with exact oracles.

use std::sync::Arc;

use crate::active::{ActiveEnvironment, TableCost};
use crate::diagnostics::RiskEvaluator;
use crate::direction::{FiniteSampler, SearchDirection};
use crate::em::MixtureModel;
use crate::error::Result;
use crate::gibbs::{binary_states, FiniteGibbsModel, LinearEnergy};
use crate::param::ParameterVector;
use crate::risk::{ClosureLoss, FixedDistribution, LossFn, RiskOracle};
use crate::vecops;

/// Singleton plus pairwise-product features over d binary units:
/// φ(x) = (x_1, …, x_d, x_r x_s for r < s).
pub fn pairwise_features(d: usize) -> impl Fn(&[f64]) -> Vec<f64> + Send + Sync + Clone + 'static {
    move |x: &[f64]| {
        let mut f = x.to_vec();
        for r in 0..d {
            for s in (r + 1)..d {
                f.push(x[r] * x[s]);
            }
        }
        f
    }
}

pub fn pairwise_feature_dim(d: usize) -> usize {
    d + d * (d - 1) / 2
}

/// A Boltzmann machine on `units` binary units with singleton and pairwise
/// features: V(x; θ) = −θᵀφ(x), q = d + d(d−1)/2.
pub fn boltzmann_model(units: usize) -> FiniteGibbsModel {
    let q = pairwise_feature_dim(units);
    FiniteGibbsModel::new(
        binary_states(units),
        Arc::new(LinearEnergy::new(q, pairwise_features(units))),
    )
    .expect("built-in model is well-formed")
}

/// The generating parameters of the 4-unit testbed: entries within [−1, 1],
/// ordered singletons first, then pairs (0,1), (0,2), (0,3), (1,2), (1,3),
/// (2,3).
pub fn boltzmann4_theta_star() -> ParameterVector {
    ParameterVector::new(vec![0.8, -0.6, 0.4, -0.2, 0.5, -0.4, 0.3, -0.3, 0.2, -0.5])
        .expect("built-in parameters are finite")
}

/// The 2-component mixture over 6 binary visibles.
pub fn mixture_2x6() -> MixtureModel {
    MixtureModel::new(2, 6).expect("built-in model is well-formed")
}

/// Generating parameters with well-separated components: equal mixing,
/// component means (.9, .9, .9, .1, .1, .1) and the mirror image.
pub fn mixture_2x6_theta_star() -> ParameterVector {
    let hi = (0.9f64 / 0.1f64).ln();
    let lo = -hi;
    ParameterVector::new(vec![
        0.0, 0.0, // mixing logits
        hi, hi, hi, lo, lo, lo, // component 0
        lo, lo, lo, hi, hi, hi, // component 1
    ])
    .expect("built-in parameters are finite")
}

/// The 3-state, 2-action environment. Action 0 has strictly lower expected
/// cost from every initial state, so the optimal deterministic policy is
/// (0, 0, 0) and learned policies should concentrate there.
pub fn env_3x2() -> (ActiveEnvironment, TableCost) {
    let env = ActiveEnvironment::new(
        vec![0.5, 0.3, 0.2],
        vec![
            vec![vec![0.7, 0.2, 0.1], vec![0.1, 0.2, 0.7]],
            vec![vec![0.2, 0.6, 0.2], vec![0.4, 0.1, 0.5]],
            vec![vec![0.3, 0.3, 0.4], vec![0.5, 0.4, 0.1]],
        ],
    )
    .expect("built-in environment is well-formed");
    // c(s, a, s') = base(s') + penalty(a)
    let base = [0.2, 0.5, 0.8];
    let penalty = [0.0, 1.0];
    let table = (0..3)
        .map(|_s| {
            (0..2)
                .map(|a| (0..3).map(|sf| base[sf] + penalty[a]).collect())
                .collect()
        })
        .collect();
    (env, TableCost { table })
}

/// A passive testbed: a fixed finite sample distribution, a loss, and the
/// per-sample gradient direction d = −∇θc.
pub struct PassiveTestbed {
    pub oracle: RiskOracle,
    pub states: Vec<Vec<f64>>,
    pub probs: Vec<f64>,
    pub param_dim: usize,
    pub default_initial: ParameterVector,
}

impl PassiveTestbed {
    fn new(
        loss: Arc<dyn LossFn>,
        states: Vec<Vec<f64>>,
        param_dim: usize,
        default_initial: ParameterVector,
    ) -> Result<Self> {
        let probs = vec![1.0 / states.len() as f64; states.len()];
        let dist = FixedDistribution::new(states.clone(), probs.clone())?;
        Ok(Self {
            oracle: RiskOracle::passive(loss, Arc::new(dist)),
            states,
            probs,
            param_dim,
            default_initial,
        })
    }

    pub fn sampler(&self) -> FiniteSampler {
        FiniteSampler::new(self.states.clone(), self.probs.clone())
            .expect("testbed distribution is well-formed")
    }

    pub fn direction(&self) -> NegLossGradDirection {
        NegLossGradDirection {
            loss: self.oracle.loss_fn().clone(),
        }
    }

    pub fn evaluator(&self) -> PassiveEvaluator {
        PassiveEvaluator {
            oracle: self.oracle.clone(),
        }
    }
}

/// The stochastic gradient direction d(x, θ) = −∇θ c(x, θ).
pub struct NegLossGradDirection {
    loss: Arc<dyn LossFn>,
}

impl SearchDirection for NegLossGradDirection {
    fn eval(&self, x: &[f64], theta: &ParameterVector) -> Vec<f64> {
        let mut g = self.loss.grad_theta(x, theta);
        vecops::scale(&mut g, -1.0);
        g
    }
}

/// Loss, gradient, and expected direction for a passive testbed; the
/// expected direction is enumerated as Σ_x (−∇θ c) p_o(x).
pub struct PassiveEvaluator {
    oracle: RiskOracle,
}

impl RiskEvaluator for PassiveEvaluator {
    fn loss(&self, theta: &ParameterVector) -> f64 {
        self.oracle.risk(theta)
    }

    fn grad(&self, theta: &ParameterVector) -> Vec<f64> {
        self.oracle.risk_grad(theta)
    }

    fn expected_direction(&self, theta: &ParameterVector) -> Vec<f64> {
        let mut dir = vec![0.0; theta.dim()];
        for (x, p) in self.oracle.distribution().enumerate(theta) {
            let mut g = self.oracle.loss_fn().grad_theta(&x, theta);
            vecops::scale(&mut g, -1.0);
            vecops::add_scaled(&mut dir, p, &g);
        }
        dir
    }
}

/// The quadratic passive testbed: c(x, θ) = |θ − x|² over a symmetric
/// 4-point cloud in R², so ℓ(θ) = |θ|² + const with minimizer 0 and Hessian
/// 2I.
pub fn quadratic_testbed() -> PassiveTestbed {
    let states = vec![
        vec![0.05, 0.0],
        vec![-0.05, 0.0],
        vec![0.0, 0.05],
        vec![0.0, -0.05],
    ];
    let loss = ClosureLoss {
        value: |x: &[f64], t: &ParameterVector| {
            t.as_slice()
                .iter()
                .zip(x)
                .map(|(ti, xi)| (ti - xi) * (ti - xi))
                .sum()
        },
        grad: |x: &[f64], t: &ParameterVector| {
            t.as_slice()
                .iter()
                .zip(x)
                .map(|(ti, xi)| 2.0 * (ti - xi))
                .collect()
        },
    };
    let initial = ParameterVector::new(vec![1.0, 1.0]).expect("finite initial point");
    PassiveTestbed::new(Arc::new(loss), states, 2, initial).expect("built-in testbed")
}

/// The logistic passive testbed: x = (z_1, z_2, y) with y ∈ {0, 1},
/// c(x, θ) = softplus(u) − y·u for u = θ_1 z_1 + θ_2 z_2 + θ_3. The labels
/// are deliberately not separable, so the risk has a finite minimizer and a
/// uniformly bounded Hessian.
pub fn logistic_testbed() -> PassiveTestbed {
    let states = vec![
        vec![1.0, 0.5, 1.0],
        vec![0.8, -0.3, 1.0],
        vec![-0.6, 0.9, 1.0],
        vec![0.2, 0.1, 0.0],
        vec![-1.0, -0.5, 0.0],
        vec![-0.8, 0.3, 0.0],
        vec![0.6, -0.9, 0.0],
        vec![-0.2, -0.1, 1.0],
    ];
    let loss = ClosureLoss {
        value: |x: &[f64], t: &ParameterVector| {
            let u = t[0] * x[0] + t[1] * x[1] + t[2];
            vecops::softplus(u) - x[2] * u
        },
        grad: |x: &[f64], t: &ParameterVector| {
            let u = t[0] * x[0] + t[1] * x[1] + t[2];
            let r = vecops::sigmoid(u) - x[2];
            vec![r * x[0], r * x[1], r]
        },
    };
    let initial = ParameterVector::zeros(3).expect("q >= 1");
    PassiveTestbed::new(Arc::new(loss), states, 3, initial).expect("built-in testbed")
}
