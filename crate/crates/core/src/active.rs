//! Episodic active learning: finite environments, softmax action policies,
//! and the policy-gradient update.
//!
//! An open-loop episode is u = [s_o, a, s_F]: an initial state from p_o(s_o),
//! an action from the policy p(a | s_o, θ), and a final state from the
//! environment table p_o(s_F | a, s_o). The closed-loop form chains two
//! action steps, u = [s_o, a_o, s_1, a_1, s_2], with the same machinery.
//! Episodes are i.i.d. given θ; because the episode distribution depends on
//! θ, the risk gradient carries the extra score term that the passive formula
//! misses.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::diagnostics::RiskEvaluator;
use crate::direction::{SearchDirection, StateSampler, StochasticDirection};
use crate::error::{Result, SaError};
use crate::param::ParameterVector;
use crate::risk::ParamDistribution;
use crate::rng::{StreamRng, LANE_OBSERVATION};
use crate::runner::{run, RunConfig, Trajectory};
use crate::vecops;

/// A finite statistical environment: initial-state probabilities and
/// per-(state, action) transition rows, all row-normalized.
#[derive(Clone, Debug, PartialEq)]
pub struct ActiveEnvironment {
    initial_probs: Vec<f64>,
    /// transition[s][a][s'] = p_o(s' | a, s)
    transition: Vec<Vec<Vec<f64>>>,
}

const ROW_TOL: f64 = 1e-12;

fn check_row(row: &[f64], what: &str) -> Result<()> {
    if row.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
        return Err(SaError::InvalidConfig(format!(
            "{what} must contain nonnegative finite entries"
        )));
    }
    let total: f64 = row.iter().sum();
    if (total - 1.0).abs() > ROW_TOL {
        return Err(SaError::InvalidConfig(format!(
            "{what} must sum to 1 (got {total})"
        )));
    }
    Ok(())
}

impl ActiveEnvironment {
    pub fn new(initial_probs: Vec<f64>, transition: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let n_states = initial_probs.len();
        if n_states == 0 {
            return Err(SaError::InvalidConfig(
                "environment needs at least one state".into(),
            ));
        }
        check_row(&initial_probs, "initial state probabilities")?;
        if transition.len() != n_states {
            return Err(SaError::DimensionMismatch {
                expected: n_states,
                got: transition.len(),
            });
        }
        let n_actions = transition[0].len();
        if n_actions == 0 {
            return Err(SaError::InvalidConfig(
                "environment needs at least one action".into(),
            ));
        }
        for (s, rows) in transition.iter().enumerate() {
            if rows.len() != n_actions {
                return Err(SaError::DimensionMismatch {
                    expected: n_actions,
                    got: rows.len(),
                });
            }
            for (a, row) in rows.iter().enumerate() {
                if row.len() != n_states {
                    return Err(SaError::DimensionMismatch {
                        expected: n_states,
                        got: row.len(),
                    });
                }
                check_row(row, &format!("transition row (state {s}, action {a})"))?;
            }
        }
        Ok(Self {
            initial_probs,
            transition,
        })
    }

    pub fn n_states(&self) -> usize {
        self.initial_probs.len()
    }

    pub fn n_actions(&self) -> usize {
        self.transition[0].len()
    }

    pub fn initial_probs(&self) -> &[f64] {
        &self.initial_probs
    }

    pub fn transition_prob(&self, s: usize, a: usize, sf: usize) -> f64 {
        self.transition[s][a][sf]
    }
}

/// Softmax action policy: θ holds one logit block of length J per state,
/// q = |S| · J.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Policy {
    n_states: usize,
    n_actions: usize,
}

impl Policy {
    pub fn new(n_states: usize, n_actions: usize) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(SaError::InvalidConfig(
                "policy needs at least one state and one action".into(),
            ));
        }
        Ok(Self {
            n_states,
            n_actions,
        })
    }

    pub fn for_env(env: &ActiveEnvironment) -> Self {
        Self {
            n_states: env.n_states(),
            n_actions: env.n_actions(),
        }
    }

    pub fn param_dim(&self) -> usize {
        self.n_states * self.n_actions
    }

    pub fn logits<'t>(&self, theta: &'t ParameterVector, s: usize) -> &'t [f64] {
        let start = s * self.n_actions;
        &theta.as_slice()[start..start + self.n_actions]
    }

    /// p(· | s, θ): softmax over the state's logit block, strictly positive
    /// for finite θ.
    pub fn action_probs(&self, s: usize, theta: &ParameterVector) -> Vec<f64> {
        vecops::softmax(self.logits(theta, s))
    }

    /// ∇θ log p(a | s, θ): e_a − p(· | s) in block s, zero elsewhere.
    pub fn log_prob_grad(&self, s: usize, a: usize, theta: &ParameterVector) -> Vec<f64> {
        let mut grad = vec![0.0; self.param_dim()];
        self.add_log_prob_grad(&mut grad, s, a, theta);
        grad
    }

    fn add_log_prob_grad(&self, into: &mut [f64], s: usize, a: usize, theta: &ParameterVector) {
        let probs = self.action_probs(s, theta);
        let start = s * self.n_actions;
        for (j, p) in probs.iter().enumerate() {
            into[start + j] += if j == a { 1.0 - p } else { -p };
        }
    }

    pub fn sample_action(&self, s: usize, theta: &ParameterVector, rng: &mut ChaCha8Rng) -> usize {
        let probs = self.action_probs(s, theta);
        let u: f64 = rng.random();
        vecops::categorical_draw(&probs, u)
    }
}

/// One interaction unit. Open-loop episodes carry a single action; the
/// closed-loop form chains two.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EpisodeRecord {
    Open {
        s0: usize,
        a: usize,
        sf: usize,
    },
    Closed {
        s0: usize,
        a0: usize,
        s1: usize,
        a1: usize,
        s2: usize,
    },
}

impl EpisodeRecord {
    /// [s0, a, sf] or [s0, a0, s1, a1, s2] as f64 indices.
    pub fn encode(&self) -> Vec<f64> {
        match *self {
            EpisodeRecord::Open { s0, a, sf } => vec![s0 as f64, a as f64, sf as f64],
            EpisodeRecord::Closed { s0, a0, s1, a1, s2 } => {
                vec![s0 as f64, a0 as f64, s1 as f64, a1 as f64, s2 as f64]
            }
        }
    }

    pub fn decode(x: &[f64]) -> Result<Self> {
        let idx = |v: f64| v as usize;
        match x.len() {
            3 => Ok(EpisodeRecord::Open {
                s0: idx(x[0]),
                a: idx(x[1]),
                sf: idx(x[2]),
            }),
            5 => Ok(EpisodeRecord::Closed {
                s0: idx(x[0]),
                a0: idx(x[1]),
                s1: idx(x[2]),
                a1: idx(x[3]),
                s2: idx(x[4]),
            }),
            n => Err(SaError::DimensionMismatch {
                expected: 3,
                got: n,
            }),
        }
    }
}

/// The cost c(u; θ). The θ argument allows an adaptive-critic term; table
/// costs ignore it.
pub trait EpisodeCost: Send + Sync {
    fn value(&self, u: &EpisodeRecord, theta: &ParameterVector) -> f64;

    fn grad_theta(&self, _u: &EpisodeRecord, theta: &ParameterVector) -> Vec<f64> {
        vec![0.0; theta.dim()]
    }
}

/// θ-free costs indexed by (s, a, s'); closed-loop episodes sum their two
/// stage costs.
#[derive(Clone, Debug, PartialEq)]
pub struct TableCost {
    /// cost[s][a][s']
    pub table: Vec<Vec<Vec<f64>>>,
}

impl TableCost {
    pub fn stage_cost(&self, s: usize, a: usize, sf: usize) -> f64 {
        self.table[s][a][sf]
    }
}

impl EpisodeCost for TableCost {
    fn value(&self, u: &EpisodeRecord, _theta: &ParameterVector) -> f64 {
        match *u {
            EpisodeRecord::Open { s0, a, sf } => self.stage_cost(s0, a, sf),
            EpisodeRecord::Closed { s0, a0, s1, a1, s2 } => {
                self.stage_cost(s0, a0, s1) + self.stage_cost(s1, a1, s2)
            }
        }
    }
}

/// A table cost plus the quadratic critic term (weight/2)·|θ|², giving the
/// risk gradient a nonzero ∂c/∂θ component.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticCriticCost {
    pub base: TableCost,
    pub weight: f64,
}

impl EpisodeCost for QuadraticCriticCost {
    fn value(&self, u: &EpisodeRecord, theta: &ParameterVector) -> f64 {
        let q = theta.norm();
        self.base.value(u, theta) + 0.5 * self.weight * q * q
    }

    fn grad_theta(&self, _u: &EpisodeRecord, theta: &ParameterVector) -> Vec<f64> {
        theta.as_slice().iter().map(|v| self.weight * v).collect()
    }
}

/// All episodes of the given form, in a fixed enumeration order.
pub fn enumerate_episodes(env: &ActiveEnvironment, closed_loop: bool) -> Vec<EpisodeRecord> {
    let s = env.n_states();
    let j = env.n_actions();
    let mut out = Vec::new();
    if closed_loop {
        for s0 in 0..s {
            for a0 in 0..j {
                for s1 in 0..s {
                    for a1 in 0..j {
                        for s2 in 0..s {
                            out.push(EpisodeRecord::Closed { s0, a0, s1, a1, s2 });
                        }
                    }
                }
            }
        }
    } else {
        for s0 in 0..s {
            for a in 0..j {
                for sf in 0..s {
                    out.push(EpisodeRecord::Open { s0, a, sf });
                }
            }
        }
    }
    out
}

/// The probability of a full episode path, actions included.
pub fn path_density(
    env: &ActiveEnvironment,
    policy: &Policy,
    u: &EpisodeRecord,
    theta: &ParameterVector,
) -> f64 {
    match *u {
        EpisodeRecord::Open { s0, a, sf } => {
            env.initial_probs()[s0]
                * policy.action_probs(s0, theta)[a]
                * env.transition_prob(s0, a, sf)
        }
        EpisodeRecord::Closed { s0, a0, s1, a1, s2 } => {
            env.initial_probs()[s0]
                * policy.action_probs(s0, theta)[a0]
                * env.transition_prob(s0, a0, s1)
                * policy.action_probs(s1, theta)[a1]
                * env.transition_prob(s1, a1, s2)
        }
    }
}

/// p(u | θ) for the open episode u = [s_o, s_F], marginalized over actions:
/// p_o(s_o) · Σ_j p_o(s_F | a_j, s_o) p(a_j | s_o, θ).
pub fn episode_density(
    env: &ActiveEnvironment,
    policy: &Policy,
    s0: usize,
    sf: usize,
    theta: &ParameterVector,
) -> f64 {
    let action_probs = policy.action_probs(s0, theta);
    let conditional: f64 = (0..env.n_actions())
        .map(|a| env.transition_prob(s0, a, sf) * action_probs[a])
        .sum();
    env.initial_probs()[s0] * conditional
}

/// ∇θ log p(u | θ): the policy score of the action(s) actually taken; the
/// environment tables are θ-free.
pub fn path_score(policy: &Policy, u: &EpisodeRecord, theta: &ParameterVector) -> Vec<f64> {
    let mut score = vec![0.0; policy.param_dim()];
    match *u {
        EpisodeRecord::Open { s0, a, .. } => policy.add_log_prob_grad(&mut score, s0, a, theta),
        EpisodeRecord::Closed { s0, a0, s1, a1, .. } => {
            policy.add_log_prob_grad(&mut score, s0, a0, theta);
            policy.add_log_prob_grad(&mut score, s1, a1, theta);
        }
    }
    score
}

/// ℓ(θ) = Σ_u c(u, θ) p(u | θ) by full enumeration.
pub fn active_risk(
    env: &ActiveEnvironment,
    policy: &Policy,
    cost: &dyn EpisodeCost,
    theta: &ParameterVector,
    closed_loop: bool,
) -> f64 {
    enumerate_episodes(env, closed_loop)
        .iter()
        .map(|u| cost.value(u, theta) * path_density(env, policy, u, theta))
        .sum()
}

/// The two terms of the active gradient: (Σ ∇θc · p, Σ c · ∇θp). The first
/// is the passive formula; their sum is the correct gradient when the
/// episode distribution depends on θ.
pub fn active_risk_grad_terms(
    env: &ActiveEnvironment,
    policy: &Policy,
    cost: &dyn EpisodeCost,
    theta: &ParameterVector,
    closed_loop: bool,
) -> (Vec<f64>, Vec<f64>) {
    let q = theta.dim();
    let mut cost_term = vec![0.0; q];
    let mut score_term = vec![0.0; q];
    for u in enumerate_episodes(env, closed_loop) {
        let p = path_density(env, policy, &u, theta);
        if p == 0.0 {
            continue;
        }
        vecops::add_scaled(&mut cost_term, p, &cost.grad_theta(&u, theta));
        let c = cost.value(&u, theta);
        vecops::add_scaled(&mut score_term, c * p, &path_score(policy, &u, theta));
    }
    (cost_term, score_term)
}

/// ∇θℓ, both terms.
pub fn active_risk_grad(
    env: &ActiveEnvironment,
    policy: &Policy,
    cost: &dyn EpisodeCost,
    theta: &ParameterVector,
    closed_loop: bool,
) -> Vec<f64> {
    let (mut g, score_term) = active_risk_grad_terms(env, policy, cost, theta, closed_loop);
    vecops::add_scaled(&mut g, 1.0, &score_term);
    g
}

/// One episode drawn at the current θ.
pub fn sample_episode(
    env: &ActiveEnvironment,
    policy: &Policy,
    theta: &ParameterVector,
    closed_loop: bool,
    rng: &mut ChaCha8Rng,
) -> EpisodeRecord {
    let draw_row = |row: &[f64], rng: &mut ChaCha8Rng| {
        let u: f64 = rng.random();
        vecops::categorical_draw(row, u)
    };
    let s0 = draw_row(env.initial_probs(), rng);
    let a0 = policy.sample_action(s0, theta, rng);
    let s1 = draw_row(&env.transition[s0][a0], rng);
    if !closed_loop {
        return EpisodeRecord::Open { s0, a: a0, sf: s1 };
    }
    let a1 = policy.sample_action(s1, theta, rng);
    let s2 = draw_row(&env.transition[s1][a1], rng);
    EpisodeRecord::Closed { s0, a0, s1, a1, s2 }
}

/// The policy-gradient search direction for a sampled episode:
/// −∇θc(u, θ) − (c(u, θ) − baseline) · ∇θ log p(u | θ).
///
/// The baseline shifts individual directions without changing the expected
/// one (the score has zero mean).
pub fn policy_gradient_direction(
    policy: &Policy,
    cost: &dyn EpisodeCost,
    u: &EpisodeRecord,
    theta: &ParameterVector,
    baseline: f64,
) -> Vec<f64> {
    let mut dir: Vec<f64> = cost.grad_theta(u, theta).iter().map(|v| -v).collect();
    let c = cost.value(u, theta);
    vecops::add_scaled(&mut dir, -(c - baseline), &path_score(policy, u, theta));
    dir
}

/// Exact minimum of the risk over all J^{|S|} deterministic action
/// assignments, with the best assignment. Table costs only (a θ-dependent
/// critic would make "deterministic policy" ill-defined).
pub fn best_deterministic_risk(
    env: &ActiveEnvironment,
    cost: &TableCost,
    closed_loop: bool,
) -> (f64, Vec<usize>) {
    let s = env.n_states();
    let j = env.n_actions();
    let mut best = f64::INFINITY;
    let mut best_assign = vec![0; s];
    let mut assign = vec![0usize; s];
    loop {
        let risk = deterministic_risk(env, cost, &assign, closed_loop);
        if risk < best {
            best = risk;
            best_assign = assign.clone();
        }
        // next assignment in mixed-radix order
        let mut carry = 0;
        loop {
            assign[carry] += 1;
            if assign[carry] < j {
                break;
            }
            assign[carry] = 0;
            carry += 1;
            if carry == s {
                return (best, best_assign);
            }
        }
    }
}

fn deterministic_risk(
    env: &ActiveEnvironment,
    cost: &TableCost,
    assign: &[usize],
    closed_loop: bool,
) -> f64 {
    let s = env.n_states();
    let mut risk = 0.0;
    for s0 in 0..s {
        let p0 = env.initial_probs()[s0];
        if p0 == 0.0 {
            continue;
        }
        let a0 = assign[s0];
        for s1 in 0..s {
            let p1 = env.transition_prob(s0, a0, s1);
            if p1 == 0.0 {
                continue;
            }
            if closed_loop {
                let a1 = assign[s1];
                for s2 in 0..s {
                    let p2 = env.transition_prob(s1, a1, s2);
                    risk +=
                        p0 * p1 * p2 * (cost.stage_cost(s0, a0, s1) + cost.stage_cost(s1, a1, s2));
                }
            } else {
                risk += p0 * p1 * cost.stage_cost(s0, a0, s1);
            }
        }
    }
    risk
}

/// The training source: one episode per iteration, drawn at the current θ.
pub struct ActiveDirectionSource<'a> {
    pub env: &'a ActiveEnvironment,
    pub policy: Policy,
    pub cost: &'a dyn EpisodeCost,
    pub closed_loop: bool,
    pub baseline: f64,
}

impl StochasticDirection for ActiveDirectionSource<'_> {
    fn mean_direction(
        &mut self,
        theta: &ParameterVector,
        iter: u64,
        rng: &StreamRng,
    ) -> Result<Vec<f64>> {
        let mut lane = rng.stream(iter, LANE_OBSERVATION);
        let u = sample_episode(self.env, &self.policy, theta, self.closed_loop, &mut lane);
        let dir = policy_gradient_direction(&self.policy, self.cost, &u, theta, self.baseline);
        if dir.iter().any(|v| !v.is_finite()) {
            return Err(SaError::NonFiniteDirection {
                iter,
                sample: u.encode(),
            });
        }
        Ok(dir)
    }
}

/// Exact loss/gradient/expected-direction evaluation for active runs. The
/// expected direction enumerates Σ_u p(u | θ) d(u, θ) directly.
pub struct ActiveEvaluator<'a> {
    pub env: &'a ActiveEnvironment,
    pub policy: Policy,
    pub cost: &'a dyn EpisodeCost,
    pub closed_loop: bool,
    pub baseline: f64,
}

impl RiskEvaluator for ActiveEvaluator<'_> {
    fn loss(&self, theta: &ParameterVector) -> f64 {
        active_risk(self.env, &self.policy, self.cost, theta, self.closed_loop)
    }

    fn grad(&self, theta: &ParameterVector) -> Vec<f64> {
        active_risk_grad(self.env, &self.policy, self.cost, theta, self.closed_loop)
    }

    fn expected_direction(&self, theta: &ParameterVector) -> Vec<f64> {
        let mut dir = vec![0.0; theta.dim()];
        for u in enumerate_episodes(self.env, self.closed_loop) {
            let p = path_density(self.env, &self.policy, &u, theta);
            if p == 0.0 {
                continue;
            }
            let d = policy_gradient_direction(&self.policy, self.cost, &u, theta, self.baseline);
            vecops::add_scaled(&mut dir, p, &d);
        }
        dir
    }
}

/// Runs the policy-gradient update, recording the exact risk at checkpoints.
pub fn train_active(
    env: &ActiveEnvironment,
    cost: &dyn EpisodeCost,
    initial: &ParameterVector,
    closed_loop: bool,
    baseline: f64,
    run_config: &RunConfig,
) -> Result<Trajectory> {
    let policy = Policy::for_env(env);
    if initial.dim() != policy.param_dim() {
        return Err(SaError::DimensionMismatch {
            expected: policy.param_dim(),
            got: initial.dim(),
        });
    }
    let mut source = ActiveDirectionSource {
        env,
        policy,
        cost,
        closed_loop,
        baseline,
    };
    let evaluator = ActiveEvaluator {
        env,
        policy,
        cost,
        closed_loop,
        baseline,
    };
    run(initial, &mut source, Some(&evaluator), run_config)
}

/// Episodes as encoded vectors for the downhill diagnostics.
pub struct EpisodeSampler<'a> {
    pub env: &'a ActiveEnvironment,
    pub policy: Policy,
    pub closed_loop: bool,
}

impl StateSampler for EpisodeSampler<'_> {
    fn sample(&self, theta: &ParameterVector, rng: &mut ChaCha8Rng) -> Vec<f64> {
        sample_episode(self.env, &self.policy, theta, self.closed_loop, rng).encode()
    }

    fn sample_bound(&self) -> f64 {
        let s = (self.env.n_states() - 1) as f64;
        let a = (self.env.n_actions() - 1) as f64;
        let coords = if self.closed_loop {
            vec![s, a, s, a, s]
        } else {
            vec![s, a, s]
        };
        vecops::norm(&coords).max(1.0)
    }

    fn enumerate(&self, theta: &ParameterVector) -> Option<Vec<(Vec<f64>, f64)>> {
        Some(
            enumerate_episodes(self.env, self.closed_loop)
                .iter()
                .map(|u| (u.encode(), path_density(self.env, &self.policy, u, theta)))
                .collect(),
        )
    }
}

/// The policy-gradient direction over encoded episodes.
pub struct EpisodeDirection<'a> {
    pub policy: Policy,
    pub cost: &'a dyn EpisodeCost,
    pub baseline: f64,
}

impl SearchDirection for EpisodeDirection<'_> {
    fn eval(&self, x: &[f64], theta: &ParameterVector) -> Vec<f64> {
        let u = EpisodeRecord::decode(x).expect("well-formed episode encoding");
        policy_gradient_direction(&self.policy, self.cost, &u, theta, self.baseline)
    }
}

/// The episode distribution as a [`ParamDistribution`], connecting the
/// active testbed to the generic risk oracle. Owns its environment so it can
/// live behind the oracle's shared handle.
#[derive(Clone)]
pub struct EpisodeDistribution {
    pub env: ActiveEnvironment,
    pub policy: Policy,
    pub closed_loop: bool,
}

impl ParamDistribution for EpisodeDistribution {
    fn enumerate(&self, theta: &ParameterVector) -> Vec<(Vec<f64>, f64)> {
        enumerate_episodes(&self.env, self.closed_loop)
            .iter()
            .map(|u| (u.encode(), path_density(&self.env, &self.policy, u, theta)))
            .collect()
    }

    fn score(&self, x: &[f64], theta: &ParameterVector) -> Vec<f64> {
        let u = EpisodeRecord::decode(x).expect("well-formed episode encoding");
        path_score(&self.policy, &u, theta)
    }
}

/// An [`EpisodeCost`] as a loss over encoded episodes.
pub struct EpisodeLoss<C> {
    pub cost: C,
}

impl<C: EpisodeCost> crate::risk::LossFn for EpisodeLoss<C> {
    fn value(&self, x: &[f64], theta: &ParameterVector) -> f64 {
        let u = EpisodeRecord::decode(x).expect("well-formed episode encoding");
        self.cost.value(&u, theta)
    }

    fn grad_theta(&self, x: &[f64], theta: &ParameterVector) -> Vec<f64> {
        let u = EpisodeRecord::decode(x).expect("well-formed episode encoding");
        self.cost.grad_theta(&u, theta)
    }
}
