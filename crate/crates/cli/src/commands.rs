//! Utility commands: gradient checks, offline filter initialization and
//! exploration data collection.

use std::path::Path;

use rpsp::envs::{collect_samples, make_env_with_horizon, BlindPolicy};
use rpsp::gradcore::{gradient_check_suite, GradientCheckSummary};
use rpsp::init2sr::{initialize_psr, prediction_mse};
use rpsp::io::{load_trajectories, psr_to_json, save_trajectories};
use rpsp::Trajectory;

use crate::config::ExperimentConfig;
use crate::error::CliError;

/// Largest relative error accepted by `check-gradients`.
pub const GRADIENT_TOLERANCE: f64 = 1e-4;

/// Runs the finite-difference suite; fails when either check exceeds the tolerance.
pub fn check_gradients(seed: u64) -> Result<(GradientCheckSummary, String), CliError> {
    let s = gradient_check_suite(seed)?;
    let mut text = String::new();
    for (name, r) in [("prediction loss", &s.prediction), ("policy surrogate", &s.surrogate)] {
        text += &format!(
            "{name}: max relative error {:.3e} over {} coordinates (worst index {}: analytic {:.6e}, numeric {:.6e})\n",
            r.max_relative_error, r.checked, r.index, r.analytic, r.numeric
        );
    }
    let worst = s.prediction.max_relative_error.max(s.surrogate.max_relative_error);
    if worst.is_nan() || worst > GRADIENT_TOLERANCE {
        return Err(CliError::Runtime(format!("{text}gradient check failed: {worst:.3e} > {GRADIENT_TOLERANCE:e}")));
    }
    Ok((s, text))
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitReport {
    pub trajectories: usize,
    pub steps: usize,
    pub d_q: usize,
    pub num_params: usize,
    pub prediction_mse: f64,
}

/// Two-stage initialization from a saved trajectory batch; writes the filter
/// checkpoint to `out`.
pub fn init_psr(traj_file: &Path, config: &ExperimentConfig, seed: u64, out: &Path) -> Result<InitReport, CliError> {
    let trajs: Vec<Trajectory<f64>> = load_trajectories(traj_file)
        .map_err(|e| CliError::Config(format!("{}: {e}", traj_file.display())))?;
    let init = config.init_config(seed);
    init.validate()?;
    let psr = initialize_psr(&trajs, &init)?;
    let report = InitReport {
        trajectories: trajs.len(),
        steps: trajs.iter().map(|t| t.len()).sum(),
        d_q: psr.dims().d_q(),
        num_params: psr.num_params(),
        prediction_mse: prediction_mse(&psr, &trajs)?,
    };
    std::fs::write(out, psr_to_json(&psr)?)?;
    Ok(report)
}

/// Blind-policy exploration batch of at least `samples` steps.
pub fn collect(config: &ExperimentConfig, samples: usize, seed: u64, out: &Path) -> Result<usize, CliError> {
    if samples == 0 {
        return Err(CliError::Config("sample count must be positive".into()));
    }
    let mut env = make_env_with_horizon(&config.env, config.noise_sigma, config.horizon)?;
    let blind = BlindPolicy::for_spec(env.spec());
    let batch = collect_samples::<f64, _>(env.as_mut(), &blind, samples, seed)?;
    save_trajectories(out, &batch.trajectories)?;
    Ok(batch.trajectories.len())
}
