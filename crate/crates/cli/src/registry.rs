//! The model registry: string keys from the config mapped onto the built-in
//! testbeds, with dataset generation and uniform run/check surfaces.

use std::sync::Arc;

use sa_core::active::{
    ActiveDirectionSource, ActiveEnvironment, ActiveEvaluator, EpisodeCost, EpisodeDirection,
    EpisodeSampler, Policy, QuadraticCriticCost, TableCost,
};
use sa_core::cd::{
    cd_chain_expected_direction, exact_nll, exact_nll_grad, CdConfig, CdDirectionSource,
    CdEvaluator, CdPairDirection, CdPairSampler, DataSet, SamplerMode,
};
use sa_core::diagnostics::{check_downhill, DownhillReport, RiskEvaluator};
use sa_core::em::{
    marginal_nll, marginal_nll_grad, MixtureModel, SemDirectionSource, SemEvaluator,
    SemPairDirection, SemPairSampler,
};
use sa_core::gibbs::{binary_states, FiniteGibbsModel, LinearEnergy};
use sa_core::risk::gradient_rel_error;
use sa_core::runner::{run, RunConfig, Trajectory};
use sa_core::testbeds::{self, PassiveTestbed};
use sa_core::{
    MiniBatchDirection, ParameterVector, SaError, SearchDirection, StochasticDirection, StreamRng,
    LANE_INIT,
};

use crate::config::{Algorithm, CdSamplerModeName, CdSection, ExperimentConfig};
use crate::error::HarnessError;

pub const KNOWN_KEYS: &[&str] = &[
    "quadratic",
    "logistic",
    "boltzmann4",
    "custom_gibbs",
    "mixture2x6",
    "custom_mixture",
    "env3x2",
    "custom_active",
];

/// Negates an inner direction source; turns every descent run into the
/// corresponding ascent run for monitor and downhill diagnostics.
struct FlipSource<S>(S);

impl<S: StochasticDirection> StochasticDirection for FlipSource<S> {
    fn mean_direction(
        &mut self,
        theta: &ParameterVector,
        iter: u64,
        rng: &StreamRng,
    ) -> Result<Vec<f64>, SaError> {
        let mut dir = self.0.mean_direction(theta, iter, rng)?;
        for v in dir.iter_mut() {
            *v = -*v;
        }
        Ok(dir)
    }
}

/// Negates a per-sample direction (downhill diagnostics of flipped runs).
struct FlipSearch<D>(D);

impl<D: SearchDirection> SearchDirection for FlipSearch<D> {
    fn eval(&self, x: &[f64], theta: &ParameterVector) -> Vec<f64> {
        let mut d = self.0.eval(x, theta);
        for v in d.iter_mut() {
            *v = -*v;
        }
        d
    }
}

pub struct PassiveBundle {
    pub testbed: PassiveTestbed,
    pub initial: ParameterVector,
}

pub struct CdBundle {
    pub model: FiniteGibbsModel,
    pub data: DataSet,
    pub cd_config: CdConfig,
    pub theta_star: ParameterVector,
    pub initial: ParameterVector,
}

pub struct SemBundle {
    pub mixture: MixtureModel,
    pub data: Vec<Vec<f64>>,
    pub m: u32,
    pub theta_star: ParameterVector,
    pub initial: Option<ParameterVector>,
}

pub struct ActiveBundle {
    pub env: ActiveEnvironment,
    pub cost: Arc<dyn EpisodeCost>,
    pub table_cost: TableCost,
    pub closed_loop: bool,
    pub baseline: f64,
    pub initial: ParameterVector,
}

/// A fully assembled experiment: model, data, cost, and defaults.
pub enum Testbed {
    Passive(PassiveBundle),
    Cd(CdBundle),
    Sem(SemBundle),
    Active(ActiveBundle),
}

impl Testbed {
    pub fn param_dim(&self) -> usize {
        match self {
            Testbed::Passive(b) => b.testbed.param_dim,
            Testbed::Cd(b) => b.model.param_dim(),
            Testbed::Sem(b) => b.mixture.param_dim(),
            Testbed::Active(b) => Policy::for_env(&b.env).param_dim(),
        }
    }

    /// The initial point of a run with the given seed. Mixture training
    /// derives its symmetric-breaking initialization from the run seed; the
    /// other testbeds have seed-free defaults.
    pub fn initial(&self, seed: u64) -> ParameterVector {
        match self {
            Testbed::Passive(b) => b.initial.clone(),
            Testbed::Cd(b) => b.initial.clone(),
            Testbed::Sem(b) => b
                .initial
                .clone()
                .unwrap_or_else(|| b.mixture.default_initialization(seed)),
            Testbed::Active(b) => b.initial.clone(),
        }
    }

    pub fn evaluator(&self) -> Box<dyn RiskEvaluator + '_> {
        match self {
            Testbed::Passive(b) => Box::new(b.testbed.evaluator()),
            Testbed::Cd(b) => Box::new(CdEvaluator {
                model: &b.model,
                data: &b.data,
                config: b.cd_config,
            }),
            Testbed::Sem(b) => Box::new(SemEvaluator {
                model: &b.mixture,
                data: &b.data,
            }),
            Testbed::Active(b) => Box::new(ActiveEvaluator {
                env: &b.env,
                policy: Policy::for_env(&b.env),
                cost: b.cost.as_ref(),
                closed_loop: b.closed_loop,
                baseline: b.baseline,
            }),
        }
    }

    /// Executes the configured training run.
    pub fn run(
        &self,
        run_config: &RunConfig,
        m: u32,
        flip_direction: bool,
    ) -> Result<Trajectory, SaError> {
        let initial = self.initial(run_config.seed);
        let evaluator = self.evaluator();
        match self {
            Testbed::Passive(b) => {
                let source = MiniBatchDirection {
                    direction: b.testbed.direction(),
                    sampler: b.testbed.sampler(),
                    m,
                };
                dispatch_run(
                    &initial,
                    source,
                    evaluator.as_ref(),
                    run_config,
                    flip_direction,
                )
            }
            Testbed::Cd(b) => {
                let source = CdDirectionSource::new(&b.model, &b.data, b.cd_config);
                dispatch_run(
                    &initial,
                    source,
                    evaluator.as_ref(),
                    run_config,
                    flip_direction,
                )
            }
            Testbed::Sem(b) => {
                let source = SemDirectionSource::new(&b.mixture, &b.data, b.m);
                dispatch_run(
                    &initial,
                    source,
                    evaluator.as_ref(),
                    run_config,
                    flip_direction,
                )
            }
            Testbed::Active(b) => {
                let source = ActiveDirectionSource {
                    env: &b.env,
                    policy: Policy::for_env(&b.env),
                    cost: b.cost.as_ref(),
                    closed_loop: b.closed_loop,
                    baseline: b.baseline,
                };
                dispatch_run(
                    &initial,
                    source,
                    evaluator.as_ref(),
                    run_config,
                    flip_direction,
                )
            }
        }
    }

    /// Max relative error of the analytic risk gradient against central
    /// finite differences at each of the given parameter points.
    pub fn gradient_rel_errors(&self, thetas: &[ParameterVector]) -> Vec<f64> {
        thetas
            .iter()
            .map(|theta| match self {
                Testbed::Passive(b) => {
                    let g = b.testbed.oracle.risk_grad(theta);
                    gradient_rel_error(&|t: &ParameterVector| b.testbed.oracle.risk(t), &g, theta)
                }
                Testbed::Cd(b) => {
                    let g = exact_nll_grad(&b.model, &b.data, theta).expect("finite energies");
                    gradient_rel_error(
                        &|t: &ParameterVector| exact_nll(&b.model, &b.data, t).expect("finite"),
                        &g,
                        theta,
                    )
                }
                Testbed::Sem(b) => {
                    let g = marginal_nll_grad(&b.mixture, &b.data, theta);
                    gradient_rel_error(
                        &|t: &ParameterVector| marginal_nll(&b.mixture, &b.data, t),
                        &g,
                        theta,
                    )
                }
                Testbed::Active(b) => {
                    let policy = Policy::for_env(&b.env);
                    let g = sa_core::active::active_risk_grad(
                        &b.env,
                        &policy,
                        b.cost.as_ref(),
                        theta,
                        b.closed_loop,
                    );
                    gradient_rel_error(
                        &|t: &ParameterVector| {
                            sa_core::active::active_risk(
                                &b.env,
                                &policy,
                                b.cost.as_ref(),
                                t,
                                b.closed_loop,
                            )
                        },
                        &g,
                        theta,
                    )
                }
            })
            .collect()
    }

    /// Exact-mode downhill reports g(θ)ᵀd̄(θ) over a grid, enumerated through
    /// each algorithm's pair construction.
    pub fn downhill_reports(
        &self,
        grid: &[ParameterVector],
        flip_direction: bool,
        seed: u64,
    ) -> Vec<DownhillReport> {
        match self {
            Testbed::Passive(b) => {
                let sampler = b.testbed.sampler();
                let oracle = b.testbed.oracle.clone();
                let grad = move |t: &ParameterVector| oracle.risk_grad(t);
                if flip_direction {
                    check_downhill(
                        &FlipSearch(b.testbed.direction()),
                        &sampler,
                        &grad,
                        grid,
                        0,
                        seed,
                    )
                } else {
                    check_downhill(&b.testbed.direction(), &sampler, &grad, grid, 0, seed)
                }
            }
            Testbed::Cd(b) => {
                let sampler = CdPairSampler::new(&b.model, &b.data);
                let model = b.model.clone();
                let data = b.data.clone();
                let grad = move |t: &ParameterVector| {
                    exact_nll_grad(&model, &data, t).expect("finite energies")
                };
                if flip_direction {
                    check_downhill(
                        &FlipSearch(CdPairDirection { model: &b.model }),
                        &sampler,
                        &grad,
                        grid,
                        0,
                        seed,
                    )
                } else {
                    check_downhill(
                        &CdPairDirection { model: &b.model },
                        &sampler,
                        &grad,
                        grid,
                        0,
                        seed,
                    )
                }
            }
            Testbed::Sem(b) => {
                let sampler = SemPairSampler::new(&b.mixture, &b.data);
                let mixture = b.mixture;
                let data = b.data.clone();
                let grad = move |t: &ParameterVector| marginal_nll_grad(&mixture, &data, t);
                if flip_direction {
                    check_downhill(
                        &FlipSearch(SemPairDirection { model: &b.mixture }),
                        &sampler,
                        &grad,
                        grid,
                        0,
                        seed,
                    )
                } else {
                    check_downhill(
                        &SemPairDirection { model: &b.mixture },
                        &sampler,
                        &grad,
                        grid,
                        0,
                        seed,
                    )
                }
            }
            Testbed::Active(b) => {
                let policy = Policy::for_env(&b.env);
                let sampler = EpisodeSampler {
                    env: &b.env,
                    policy,
                    closed_loop: b.closed_loop,
                };
                let env = b.env.clone();
                let cost = b.cost.clone();
                let closed = b.closed_loop;
                let grad = move |t: &ParameterVector| {
                    sa_core::active::active_risk_grad(&env, &policy, cost.as_ref(), t, closed)
                };
                let direction = EpisodeDirection {
                    policy,
                    cost: b.cost.as_ref(),
                    baseline: b.baseline,
                };
                if flip_direction {
                    check_downhill(&FlipSearch(direction), &sampler, &grad, grid, 0, seed)
                } else {
                    check_downhill(&direction, &sampler, &grad, grid, 0, seed)
                }
            }
        }
    }

    /// For CD-k configurations, the measured inner products g(θ)ᵀd̄(θ) of the
    /// finite-chain direction (enumerated through transition-matrix powers).
    /// These are reported, not sign-asserted.
    pub fn cdk_measured_inner_products(&self, grid: &[ParameterVector]) -> Option<Vec<f64>> {
        match self {
            Testbed::Cd(b) if matches!(b.cd_config.sampler_mode, SamplerMode::CdK { .. }) => Some(
                grid.iter()
                    .map(|theta| {
                        let dbar =
                            cd_chain_expected_direction(&b.model, &b.data, &b.cd_config, theta)
                                .expect("finite energies");
                        let g = exact_nll_grad(&b.model, &b.data, theta).expect("finite energies");
                        g.iter().zip(&dbar).map(|(a, b)| a * b).sum()
                    })
                    .collect(),
            ),
            _ => None,
        }
    }
}

fn dispatch_run(
    initial: &ParameterVector,
    source: impl StochasticDirection,
    evaluator: &dyn RiskEvaluator,
    run_config: &RunConfig,
    flip_direction: bool,
) -> Result<Trajectory, SaError> {
    if flip_direction {
        let mut flipped = FlipSource(source);
        run(initial, &mut flipped, Some(evaluator), run_config)
    } else {
        let mut source = source;
        run(initial, &mut source, Some(evaluator), run_config)
    }
}

fn check_theta_dim(
    values: Option<&Vec<f64>>,
    expected: usize,
    what: &str,
) -> Result<Option<ParameterVector>, HarnessError> {
    match values {
        None => Ok(None),
        Some(v) => {
            if v.len() != expected {
                return Err(HarnessError::Config(format!(
                    "{what} must have dimension {expected}, got {}",
                    v.len()
                )));
            }
            Ok(Some(ParameterVector::new(v.clone())?))
        }
    }
}

fn cd_config_from(section: &CdSection, m: u32) -> Result<CdConfig, HarnessError> {
    let mode = match section.sampler_mode {
        CdSamplerModeName::Exact => SamplerMode::Exact,
        CdSamplerModeName::CdK => SamplerMode::CdK { sweeps: section.k },
        CdSamplerModeName::Persistent => SamplerMode::Persistent { sweeps: section.k },
    };
    Ok(CdConfig::new(m, mode, section.burn_in)?)
}

/// Assembles the testbed named by the config's registry key, generating
/// datasets from the configured data seed.
pub fn build(config: &ExperimentConfig) -> Result<Testbed, HarnessError> {
    let key = config.model.key.as_str();
    if !KNOWN_KEYS.contains(&key) {
        return Err(HarnessError::UnknownKey(key.to_string()));
    }
    let algorithm = config.experiment.algorithm;
    match (algorithm, key) {
        (Algorithm::SgdPassive, "quadratic") => {
            build_passive(config, testbeds::quadratic_testbed())
        }
        (Algorithm::SgdPassive, "logistic") => build_passive(config, testbeds::logistic_testbed()),
        (Algorithm::Cd, "boltzmann4") => {
            let model = testbeds::boltzmann_model(4);
            build_cd(config, model, Some(testbeds::boltzmann4_theta_star()))
        }
        (Algorithm::Cd, "custom_gibbs") => {
            let section = config.model.gibbs.as_ref().ok_or_else(|| {
                HarnessError::Config("key custom_gibbs requires a [model.gibbs] section".into())
            })?;
            let model = custom_gibbs_model(section.units, &section.feature_map)?;
            build_cd(config, model, None)
        }
        (Algorithm::Sem, "mixture2x6") => build_sem(
            config,
            testbeds::mixture_2x6(),
            Some(testbeds::mixture_2x6_theta_star()),
        ),
        (Algorithm::Sem, "custom_mixture") => {
            let section = config.model.mixture.as_ref().ok_or_else(|| {
                HarnessError::Config("key custom_mixture requires a [model.mixture] section".into())
            })?;
            if section.d > 16 {
                return Err(HarnessError::Config(
                    "custom_mixture d must be <= 16 to stay enumerable".into(),
                ));
            }
            let mixture = MixtureModel::new(section.k, section.d)?;
            build_sem(config, mixture, None)
        }
        (Algorithm::Active, "env3x2") => {
            let (env, cost) = testbeds::env_3x2();
            build_active(config, env, cost)
        }
        (Algorithm::Active, "custom_active") => {
            let section = config.model.active_env.as_ref().ok_or_else(|| {
                HarnessError::Config(
                    "key custom_active requires a [model.active_env] section".into(),
                )
            })?;
            let env =
                ActiveEnvironment::new(section.initial_probs.clone(), section.transitions.clone())?;
            let cost = TableCost {
                table: section.costs.clone(),
            };
            build_active(config, env, cost)
        }
        (algorithm, key) => Err(HarnessError::Config(format!(
            "model key `{key}` does not match algorithm `{algorithm}`"
        ))),
    }
}

fn custom_gibbs_model(units: usize, feature_map: &str) -> Result<FiniteGibbsModel, HarnessError> {
    if units == 0 || units > 12 {
        return Err(HarnessError::Config(
            "custom_gibbs units must lie in 1..=12".into(),
        ));
    }
    let energy: Arc<dyn sa_core::gibbs::EnergyFn> = match feature_map {
        "pairwise" => Arc::new(LinearEnergy::new(
            testbeds::pairwise_feature_dim(units),
            testbeds::pairwise_features(units),
        )),
        "singletons" => Arc::new(LinearEnergy::new(units, |x: &[f64]| x.to_vec())),
        other => {
            return Err(HarnessError::UnknownKey(format!("feature map `{other}`")));
        }
    };
    Ok(FiniteGibbsModel::new(binary_states(units), energy)?)
}

fn build_passive(
    config: &ExperimentConfig,
    testbed: PassiveTestbed,
) -> Result<Testbed, HarnessError> {
    let initial = check_theta_dim(config.model.theta0.as_ref(), testbed.param_dim, "theta0")?
        .unwrap_or_else(|| testbed.default_initial.clone());
    Ok(Testbed::Passive(PassiveBundle { testbed, initial }))
}

fn build_cd(
    config: &ExperimentConfig,
    model: FiniteGibbsModel,
    default_theta_star: Option<ParameterVector>,
) -> Result<Testbed, HarnessError> {
    let q = model.param_dim();
    let theta_star = check_theta_dim(config.model.theta_star.as_ref(), q, "theta_star")?
        .or(default_theta_star)
        .unwrap_or_else(|| ParameterVector::zeros(q).expect("q >= 1"));
    let n = config.model.n_data.unwrap_or(500);
    let mut rng = StreamRng::new(config.model.data_seed).stream(0, LANE_INIT);
    let data = DataSet::generate(&model, &theta_star, n, &mut rng)?;
    let cd_config = cd_config_from(&config.cd.unwrap_or_default(), config.experiment.m)?;
    let initial = check_theta_dim(config.model.theta0.as_ref(), q, "theta0")?
        .unwrap_or_else(|| ParameterVector::zeros(q).expect("q >= 1"));
    Ok(Testbed::Cd(CdBundle {
        model,
        data,
        cd_config,
        theta_star,
        initial,
    }))
}

fn build_sem(
    config: &ExperimentConfig,
    mixture: MixtureModel,
    default_theta_star: Option<ParameterVector>,
) -> Result<Testbed, HarnessError> {
    let q = mixture.param_dim();
    let theta_star = check_theta_dim(config.model.theta_star.as_ref(), q, "theta_star")?
        .or(default_theta_star)
        .unwrap_or_else(|| ParameterVector::zeros(q).expect("q >= 1"));
    let n = config.model.n_data.unwrap_or(500);
    let mut rng = StreamRng::new(config.model.data_seed).stream(0, LANE_INIT);
    let data = mixture.generate(&theta_star, n, &mut rng);
    let initial = check_theta_dim(config.model.theta0.as_ref(), q, "theta0")?;
    Ok(Testbed::Sem(SemBundle {
        mixture,
        data,
        m: config.experiment.m,
        theta_star,
        initial,
    }))
}

fn build_active(
    config: &ExperimentConfig,
    env: ActiveEnvironment,
    table_cost: TableCost,
) -> Result<Testbed, HarnessError> {
    let section = config.active.unwrap_or_default();
    let policy = Policy::for_env(&env);
    let initial = check_theta_dim(config.model.theta0.as_ref(), policy.param_dim(), "theta0")?
        .unwrap_or_else(|| ParameterVector::zeros(policy.param_dim()).expect("q >= 1"));
    let cost: Arc<dyn EpisodeCost> = if section.critic_weight > 0.0 {
        Arc::new(QuadraticCriticCost {
            base: table_cost.clone(),
            weight: section.critic_weight,
        })
    } else {
        Arc::new(table_cost.clone())
    };
    Ok(Testbed::Active(ActiveBundle {
        env,
        cost,
        table_cost,
        closed_loop: section.closed_loop,
        baseline: section.baseline,
        initial,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;

    fn config_for(algorithm: &str, key: &str) -> String {
        format!(
            r#"
[experiment]
algorithm = "{algorithm}"
seed = 1
max_iters = 10
out = "t.csv"

[model]
key = "{key}"

[schedule]
family = "constant"
gamma0 = 0.1
"#
        )
    }

    #[test]
    fn builds_every_registry_key() {
        for (algorithm, key) in [
            ("sgd_passive", "quadratic"),
            ("sgd_passive", "logistic"),
            ("cd", "boltzmann4"),
            ("sem", "mixture2x6"),
            ("active", "env3x2"),
        ] {
            let config = ExperimentConfig::parse(&config_for(algorithm, key)).unwrap();
            let testbed = build(&config).unwrap();
            assert!(testbed.param_dim() >= 2, "{key}");
        }
    }

    #[test]
    fn unknown_key_is_reported_by_name() {
        let config = ExperimentConfig::parse(&config_for("cd", "boltzmann5")).unwrap();
        match build(&config) {
            Err(HarnessError::UnknownKey(key)) => assert_eq!(key, "boltzmann5"),
            Err(other) => panic!("expected UnknownKey, got {other:?}"),
            Ok(_) => panic!("expected UnknownKey, got a testbed"),
        }
    }

    #[test]
    fn mismatched_algorithm_and_key_is_a_config_error() {
        let config = ExperimentConfig::parse(&config_for("cd", "quadratic")).unwrap();
        assert!(matches!(build(&config), Err(HarnessError::Config(_))));
    }

    #[test]
    fn custom_gibbs_requires_its_section() {
        let config = ExperimentConfig::parse(&config_for("cd", "custom_gibbs")).unwrap();
        assert!(matches!(build(&config), Err(HarnessError::Config(_))));
    }

    #[test]
    fn custom_models_build_from_their_sections() {
        let text = config_for("cd", "custom_gibbs").replace(
            "[schedule]",
            "gibbs = { units = 3, feature_map = \"pairwise\" }\n\n[schedule]",
        );
        let config = ExperimentConfig::parse(&text).unwrap();
        let testbed = build(&config).unwrap();
        assert_eq!(testbed.param_dim(), 6); // 3 singletons + 3 pairs

        let text = config_for("sem", "custom_mixture")
            .replace("[schedule]", "mixture = { k = 3, d = 4 }\n\n[schedule]");
        let config = ExperimentConfig::parse(&text).unwrap();
        let testbed = build(&config).unwrap();
        assert_eq!(testbed.param_dim(), 3 + 3 * 4);

        let text = config_for("active", "custom_active").replace(
            "[schedule]",
            concat!(
                "[model.active_env]\n",
                "initial_probs = [1.0, 0.0]\n",
                "transitions = [[[0.5, 0.5]], [[1.0, 0.0]]]\n",
                "costs = [[[1.0, 0.0]], [[0.0, 2.0]]]\n\n",
                "[schedule]"
            ),
        );
        let config = ExperimentConfig::parse(&text).unwrap();
        let testbed = build(&config).unwrap();
        assert_eq!(testbed.param_dim(), 2); // 2 states x 1 action
    }

    #[test]
    fn datasets_are_deterministic_in_the_data_seed() {
        let config = ExperimentConfig::parse(&config_for("cd", "boltzmann4")).unwrap();
        let (a, b) = (build(&config).unwrap(), build(&config).unwrap());
        match (a, b) {
            (Testbed::Cd(a), Testbed::Cd(b)) => assert_eq!(a.data, b.data),
            _ => unreachable!(),
        }
    }
}
