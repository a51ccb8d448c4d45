//! Fit a 3-unit Boltzmann model by contrastive divergence with exact model
//! draws, checking the downhill condition first and the distance to the
//! full-batch optimum afterwards.
//!
//! Run with: cargo run --release -p sa-core --example train_boltzmann

use sa_core::cd::{
    exact_nll, exact_nll_grad, minimize_nll_by_gradient_descent, train_cd, CdConfig,
    CdPairDirection, CdPairSampler, DataSet,
};
use sa_core::diagnostics::check_downhill;
use sa_core::runner::RunConfig;
use sa_core::testbeds::boltzmann_model;
use sa_core::{ParameterVector, StepSizeSchedule, StreamRng, LANE_INIT};

fn main() {
    let model = boltzmann_model(3);
    let q = model.param_dim();

    // generate 400 observations from a known parameter vector
    let theta_star =
        ParameterVector::new(vec![0.7, -0.5, 0.3, 0.4, -0.6, 0.2]).expect("finite parameters");
    let mut rng = StreamRng::new(2024).stream(0, LANE_INIT);
    let data = DataSet::generate(&model, &theta_star, 400, &mut rng).expect("valid dataset");

    // the downhill condition, enumerated exactly over (observation, sample)
    let zero = ParameterVector::zeros(q).expect("q >= 1");
    let grid = vec![zero.clone(), theta_star.clone()];
    let sampler = CdPairSampler::new(&model, &data);
    let direction = CdPairDirection { model: &model };
    let grad = |t: &ParameterVector| exact_nll_grad(&model, &data, t).expect("finite energies");
    for report in check_downhill(&direction, &sampler, &grad, &grid, 0, 1) {
        println!("g'dbar = {:+.6e} (must be <= 0)", report.exact.unwrap());
    }

    // the deterministic optimum, then the stochastic run
    let (_, best_nll) = minimize_nll_by_gradient_descent(&model, &data, &zero, 0.5, 50_000, 1e-10)
        .expect("oracle descent");
    let run_config = RunConfig::new(
        StepSizeSchedule::darken(0.5, 100.0).expect("valid schedule"),
        10_000,
        7,
    )
    .with_stop_tol(1e-3);
    let trajectory =
        train_cd(&model, &data, &zero, CdConfig::default(), &run_config).expect("training run");
    let final_nll = exact_nll(&model, &data, trajectory.final_theta()).expect("finite energies");
    println!(
        "status: {} | final nll {:.5} vs full-batch optimum {:.5} (gap {:+.5})",
        trajectory.status,
        final_nll,
        best_nll,
        final_nll - best_nll
    );
}
