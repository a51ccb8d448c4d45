//! run / check / sweep orchestration over a built testbed.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use sa_core::diagnostics::check_convergence_to_h;
use sa_core::runner::{RunConfig, RunStatus};
use sa_core::{ParameterVector, StreamRng, LANE_DIAGNOSTIC};

use crate::config::ExperimentConfig;
use crate::error::HarnessError;
use crate::registry::{self, Testbed};
use crate::trajectory;

/// Environment variable that redirects relative output paths.
pub const OUT_DIR_ENV: &str = "SA_OUT_DIR";

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub status: RunStatus,
    pub final_loss: f64,
    pub final_inner_product: f64,
    pub converged: bool,
    pub wall_seconds: f64,
    pub out_path: PathBuf,
    pub records: usize,
}

impl RunSummary {
    pub fn one_line(&self) -> String {
        format!(
            "final_loss={:.6e} final_inner_product={:.6e} converged={} wall_s={:.3} status=\"{}\" records={} out={}",
            self.final_loss,
            self.final_inner_product,
            self.converged,
            self.wall_seconds,
            self.status,
            self.records,
            self.out_path.display()
        )
    }
}

/// Applies the SA_OUT_DIR override to relative paths.
pub fn resolve_out_path(path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir).join(path),
        _ => path.to_path_buf(),
    }
}

fn run_config_from(config: &ExperimentConfig, seed: u64) -> Result<RunConfig, HarnessError> {
    let schedule = config.schedule.to_schedule()?;
    let mut run_config = RunConfig::new(schedule, config.experiment.max_iters, seed)
        .with_record_interval(config.experiment.record_interval)
        .with_full_record(config.experiment.full_record)
        .with_monitor_radius(config.experiment.monitor_radius);
    if config.experiment.stop_on_convergence {
        run_config = run_config.with_stop_tol(config.experiment.tolerance);
    }
    Ok(run_config)
}

fn execute_on(
    testbed: &Testbed,
    config: &ExperimentConfig,
    seed: u64,
    out_path: &Path,
) -> Result<RunSummary, HarnessError> {
    let run_config = run_config_from(config, seed)?;
    let start = Instant::now();
    let trajectory = testbed.run(
        &run_config,
        config.experiment.m,
        config.experiment.flip_direction,
    )?;
    let wall_seconds = start.elapsed().as_secs_f64();
    trajectory::write(out_path, &trajectory, testbed.param_dim())?;
    let evaluator = testbed.evaluator();
    let report =
        check_convergence_to_h(&trajectory, evaluator.as_ref(), config.experiment.tolerance);
    Ok(RunSummary {
        status: trajectory.status.clone(),
        final_loss: evaluator.loss(trajectory.final_theta()),
        final_inner_product: report.final_inner_product,
        converged: report.converged,
        wall_seconds,
        out_path: out_path.to_path_buf(),
        records: trajectory.len(),
    })
}

/// `run`: execute the configured training, write the trajectory file, return
/// the summary.
pub fn execute_run(
    config: &ExperimentConfig,
    seed_override: Option<u64>,
    out_override: Option<PathBuf>,
) -> Result<RunSummary, HarnessError> {
    let testbed = registry::build(config)?;
    let seed = seed_override.unwrap_or(config.experiment.seed);
    let out_path = resolve_out_path(&out_override.unwrap_or_else(|| config.experiment.out.clone()));
    execute_on(&testbed, config, seed, &out_path)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckKind {
    Gradient,
    Downhill,
    Schedule,
}

#[derive(Clone, Debug)]
pub struct CheckReport {
    pub lines: Vec<String>,
    pub passed: bool,
}

fn seeded_grid(seed: u64, count: usize, dim: usize, scale: f64) -> Vec<ParameterVector> {
    use rand_distr::{Distribution, StandardNormal};
    let streams = StreamRng::new(seed);
    (0..count)
        .map(|i| {
            let mut rng = streams.stream(i as u64, LANE_DIAGNOSTIC);
            let values = (0..dim)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    scale * z
                })
                .collect();
            ParameterVector::new(values).expect("finite grid point")
        })
        .collect()
}

const GRADIENT_TOL: f64 = 1e-6;
const DOWNHILL_SIGN_TOL: f64 = 1e-10;

/// `check`: gradient, downhill, or schedule verification with one line per
/// item; `passed` is the conjunction.
pub fn execute_check(
    config: &ExperimentConfig,
    kind: CheckKind,
) -> Result<CheckReport, HarnessError> {
    match kind {
        CheckKind::Schedule => {
            let schedule = config.schedule.to_schedule()?;
            let validity = schedule.classify();
            let passed = validity.is_robbins_monro();
            let lines = vec![format!(
                "schedule {}: sum_diverges={} sum_squares_converges={} -> {}",
                config.schedule.family,
                validity.sum_diverges,
                validity.sum_squares_converges,
                verdict(passed)
            )];
            Ok(CheckReport { lines, passed })
        }
        CheckKind::Gradient => {
            let testbed = registry::build(config)?;
            let grid = seeded_grid(config.experiment.seed, 20, testbed.param_dim(), 0.5);
            let errors = testbed.gradient_rel_errors(&grid);
            let mut passed = true;
            let mut lines = Vec::new();
            for (i, err) in errors.iter().enumerate() {
                let ok = *err < GRADIENT_TOL;
                passed &= ok;
                lines.push(format!(
                    "gradient point {i:2}: rel_error={err:.3e} (tol {GRADIENT_TOL:.0e}) -> {}",
                    verdict(ok)
                ));
            }
            Ok(CheckReport { lines, passed })
        }
        CheckKind::Downhill => {
            let testbed = registry::build(config)?;
            let grid = seeded_grid(config.experiment.seed, 5, testbed.param_dim(), 0.5);
            let reports = testbed.downhill_reports(
                &grid,
                config.experiment.flip_direction,
                config.experiment.seed,
            );
            let mut passed = true;
            let mut lines = Vec::new();
            for (i, report) in reports.iter().enumerate() {
                let value = report.exact.expect("registry samplers are enumerable");
                let ok = value <= DOWNHILL_SIGN_TOL;
                passed &= ok;
                lines.push(format!(
                    "downhill point {i}: g'dbar={value:+.6e} -> {}",
                    verdict(ok)
                ));
            }
            if let Some(measured) = testbed.cdk_measured_inner_products(&grid) {
                for (i, value) in measured.iter().enumerate() {
                    lines.push(format!(
                        "cd_k measured point {i}: g'dbar={value:+.6e} (reported, not asserted)"
                    ));
                }
            }
            Ok(CheckReport { lines, passed })
        }
    }
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "FAIL"
    }
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub seed: u64,
    pub result: Result<RunSummary, String>,
}

#[derive(Debug)]
pub struct SweepReport {
    pub outcomes: Vec<SweepOutcome>,
    pub fraction_converged: f64,
}

fn seed_out_path(base: &Path, seed: u64) -> PathBuf {
    let stem = base
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "trajectory".into());
    let ext = base
        .extension()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "csv".into());
    base.with_file_name(format!("{stem}_seed{seed}.{ext}"))
}

/// `sweep`: run every seed (in parallel), report per-seed summaries ordered
/// by seed, never aborting on individual failures.
pub fn execute_sweep(
    config: &ExperimentConfig,
    seeds: &[u64],
    out_override: Option<PathBuf>,
) -> Result<SweepReport, HarnessError> {
    if seeds.is_empty() {
        return Err(HarnessError::Config("sweep needs at least one seed".into()));
    }
    let testbed = registry::build(config)?;
    let base = resolve_out_path(&out_override.unwrap_or_else(|| config.experiment.out.clone()));
    let mut outcomes: Vec<SweepOutcome> = seeds
        .par_iter()
        .map(|&seed| {
            let out_path = seed_out_path(&base, seed);
            let result = execute_on(&testbed, config, seed, &out_path).map_err(|e| e.to_string());
            SweepOutcome { seed, result }
        })
        .collect();
    outcomes.sort_by_key(|o| o.seed);
    let successes: Vec<&RunSummary> = outcomes
        .iter()
        .filter_map(|o| o.result.as_ref().ok())
        .collect();
    let fraction_converged = if successes.is_empty() {
        0.0
    } else {
        successes.iter().filter(|s| s.converged).count() as f64 / successes.len() as f64
    };
    Ok(SweepReport {
        outcomes,
        fraction_converged,
    })
}
