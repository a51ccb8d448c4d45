//! The generic state-dependent SA iterator and its trajectory bookkeeping.

use crate::diagnostics::RiskEvaluator;
use crate::direction::{apply_step, StochasticDirection};
use crate::error::{Result, SaError};
use crate::param::ParameterVector;
use crate::rng::StreamRng;
use crate::schedule::StepSizeSchedule;
use crate::vecops;

/// Watches |θ̃(t)| against a fixed radius R. Leaving the ball is how the run
/// reports that the boundedness assumption behind the convergence guarantee
/// failed empirically.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundednessMonitor {
    pub radius: f64,
    pub violated: bool,
    pub first_violation_t: Option<u64>,
}

impl BoundednessMonitor {
    pub const DEFAULT_RADIUS: f64 = 1e10;

    pub fn new(radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(SaError::InvalidConfig(format!(
                "monitor radius must be positive and finite, got {radius}"
            )));
        }
        Ok(Self {
            radius,
            violated: false,
            first_violation_t: None,
        })
    }

    /// Records θ̃(t); returns true on the first and any later violation.
    pub fn observe(&mut self, t: u64, theta: &ParameterVector) -> bool {
        if theta.norm() > self.radius {
            if !self.violated {
                self.violated = true;
                self.first_violation_t = Some(t);
            }
            true
        } else {
            false
        }
    }
}

impl Default for BoundednessMonitor {
    fn default() -> Self {
        Self::new(Self::DEFAULT_RADIUS).expect("default radius is valid")
    }
}

/// One recorded point of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub t: u64,
    pub theta: ParameterVector,
    pub gamma: f64,
    pub loss: Option<f64>,
    pub inner_product: Option<f64>,
}

/// Why a run stopped.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RunStatus {
    /// Ran the configured number of iterations.
    MaxItersReached,
    /// |g(θ)ᵀ d̄(θ)| fell below the tolerance at a checkpoint.
    Converged { at: u64 },
    /// The iterate left the monitored ball ("A2 violated").
    A2Violated { at: u64 },
}

impl std::fmt::Display for RunStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunStatus::MaxItersReached => write!(f, "max iterations reached"),
            RunStatus::Converged { at } => write!(f, "converged at iteration {at}"),
            RunStatus::A2Violated { at } => write!(f, "A2 violated at iteration {at}"),
        }
    }
}

/// The per-iteration record of a run: θ, the scheduled γ, and, where an
/// oracle was attached, the loss ℓ(θ) and the inner product g(θ)ᵀd̄(θ).
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub records: Vec<TrajectoryRecord>,
    pub status: RunStatus,
    pub monitor: BoundednessMonitor,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn final_record(&self) -> &TrajectoryRecord {
        self.records
            .last()
            .expect("a trajectory has at least one record")
    }

    pub fn final_theta(&self) -> &ParameterVector {
        &self.final_record().theta
    }

    fn push(&mut self, record: TrajectoryRecord) {
        if let Some(last) = self.records.last() {
            assert!(
                record.t > last.t,
                "iteration indices must strictly increase"
            );
        }
        self.records.push(record);
    }
}

/// Settings shared by every training run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub schedule: StepSizeSchedule,
    pub max_iters: u64,
    /// Checkpoint spacing for loss/inner-product evaluation and the stop rule.
    pub record_interval: u64,
    /// Record θ at every iteration instead of only at checkpoints.
    pub full_record: bool,
    /// Stop once |g(θ)ᵀd̄(θ)| < tol at a checkpoint (requires an evaluator).
    pub stop_tol: Option<f64>,
    pub monitor_radius: f64,
    pub seed: u64,
}

impl RunConfig {
    pub fn new(schedule: StepSizeSchedule, max_iters: u64, seed: u64) -> Self {
        Self {
            schedule,
            max_iters,
            record_interval: 100,
            full_record: false,
            stop_tol: None,
            monitor_radius: BoundednessMonitor::DEFAULT_RADIUS,
            seed,
        }
    }

    pub fn with_record_interval(mut self, interval: u64) -> Self {
        self.record_interval = interval;
        self
    }

    pub fn with_full_record(mut self, full: bool) -> Self {
        self.full_record = full;
        self
    }

    pub fn with_stop_tol(mut self, tol: f64) -> Self {
        self.stop_tol = Some(tol);
        self
    }

    pub fn with_monitor_radius(mut self, radius: f64) -> Self {
        self.monitor_radius = radius;
        self
    }

    fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.max_iters == 0 {
            return Err(SaError::InvalidConfig("max_iters must be >= 1".into()));
        }
        if self.record_interval == 0 {
            return Err(SaError::InvalidConfig(
                "record_interval must be >= 1".into(),
            ));
        }
        if let Some(tol) = self.stop_tol {
            if !(tol.is_finite() && tol > 0.0) {
                return Err(SaError::InvalidConfig(format!(
                    "stop tolerance must be positive, got {tol}"
                )));
            }
        }
        Ok(())
    }
}

/// Iterates θ(t+1) = θ(t) + γ_t · d̂(t) from `initial` until `max_iters`, the
/// stop rule, or a monitor violation.
///
/// θ(0) and θ(max_iters) are always recorded; intermediate iterates are
/// recorded at every `record_interval`-th iteration (or all of them with
/// `full_record`). Loss and inner product are evaluated only at checkpoints,
/// and only when an evaluator is attached. Identical seeds yield bit-identical
/// trajectories.
pub fn run(
    initial: &ParameterVector,
    source: &mut dyn StochasticDirection,
    evaluator: Option<&dyn RiskEvaluator>,
    config: &RunConfig,
) -> Result<Trajectory> {
    config.validate()?;
    let rng = StreamRng::new(config.seed);
    let mut monitor = BoundednessMonitor::new(config.monitor_radius)?;
    let mut trajectory = Trajectory {
        records: Vec::new(),
        status: RunStatus::MaxItersReached,
        monitor: monitor.clone(),
    };

    let mut theta = initial.clone();
    let mut t: u64 = 0;
    loop {
        let at_checkpoint = t % config.record_interval == 0 || t == config.max_iters;
        let record_due = config.full_record || at_checkpoint;
        let mut inner = None;
        let mut loss = None;
        if at_checkpoint {
            if let Some(eval) = evaluator {
                loss = Some(eval.loss(&theta));
                inner = Some(eval.inner_product(&theta));
            }
        }
        if record_due {
            trajectory.push(TrajectoryRecord {
                t,
                theta: theta.clone(),
                gamma: config.schedule.step_size(t),
                loss,
                inner_product: inner,
            });
        }
        if t == config.max_iters {
            trajectory.status = RunStatus::MaxItersReached;
            break;
        }
        if let (Some(tol), Some(ip)) = (config.stop_tol, inner) {
            if ip.abs() < tol {
                trajectory.status = RunStatus::Converged { at: t };
                break;
            }
        }

        let mean = source.mean_direction(&theta, t, &rng)?;
        let next = apply_step(&theta, config.schedule.step_size(t), &mean)
            .map_err(|_| SaError::NonFiniteIterate { iter: t })?;
        t += 1;
        theta = next;

        if monitor.observe(t, &theta) {
            // Record the violating iterate so the trajectory shows the exit.
            trajectory.push(TrajectoryRecord {
                t,
                theta: theta.clone(),
                gamma: config.schedule.step_size(t),
                loss: None,
                inner_product: None,
            });
            trajectory.status = RunStatus::A2Violated { at: t };
            break;
        }
    }
    trajectory.monitor = monitor;
    Ok(trajectory)
}

/// Convenience: final inner product g(θ)ᵀ d̄(θ) of a trajectory, recomputed
/// from the evaluator (not the recorded value).
pub fn final_inner_product(trajectory: &Trajectory, evaluator: &dyn RiskEvaluator) -> f64 {
    let theta = trajectory.final_theta();
    vecops::dot(&evaluator.grad(theta), &evaluator.expected_direction(theta))
}
