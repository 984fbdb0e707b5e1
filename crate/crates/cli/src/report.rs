//! Cross-seed summaries and agent comparison by area under the return curve.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::run::{summary_path, SeedRun};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub iteration: usize,
    pub mean_return: f64,
    pub stderr_return: f64,
    pub mean_length: f64,
    pub stderr_length: f64,
    pub mean_env_steps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub agent: String,
    pub env: String,
    pub noise_sigma: f64,
    pub seeds: Vec<u64>,
    pub iterations: Vec<SummaryRow>,
    /// Sum over iterations of the mean return.
    pub auc: f64,
}

/// Sample mean and standard error of the mean (0 for a single value).
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Area under a curve sampled once per iteration.
pub fn area_under_curve(values: &[f64]) -> f64 {
    values.iter().sum()
}

impl Summary {
    /// Aggregates seeds over the iterations they all completed.
    pub fn from_runs(config: &ExperimentConfig, runs: &[SeedRun]) -> Self {
        let len = runs.iter().map(|r| r.metrics.len()).min().unwrap_or(0);
        let iterations: Vec<SummaryRow> = (0..len)
            .map(|i| {
                let col = |f: fn(&rpsp::optim::IterationMetrics) -> f64| -> Vec<f64> {
                    runs.iter().map(|r| f(&r.metrics[i])).collect()
                };
                let (mean_return, stderr_return) = mean_stderr(&col(|m| m.avg_return));
                let (mean_length, stderr_length) = mean_stderr(&col(|m| m.avg_length));
                let (mean_env_steps, _) = mean_stderr(&col(|m| m.env_steps as f64));
                SummaryRow {
                    iteration: i,
                    mean_return,
                    stderr_return,
                    mean_length,
                    stderr_length,
                    mean_env_steps,
                }
            })
            .collect();
        let auc = area_under_curve(&iterations.iter().map(|r| r.mean_return).collect::<Vec<_>>());
        Self {
            agent: config.agent.clone(),
            env: config.env.clone(),
            noise_sigma: config.noise_sigma,
            seeds: runs.iter().map(|r| r.seed).collect(),
            iterations,
            auc,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }

    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let path = summary_path(dir);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub rank: usize,
    pub agent: String,
    pub env: String,
    pub noise_sigma: f64,
    pub auc: f64,
    pub final_mean: f64,
    pub final_stderr: f64,
    pub seeds: usize,
    pub dir: PathBuf,
}

/// Ranks experiments by AUC, highest first; ties keep the input order.
pub fn compare_runs(dirs: &[PathBuf]) -> Result<Vec<ComparisonRow>, CliError> {
    if dirs.is_empty() {
        return Err(CliError::Config("no run directories given".into()));
    }
    let mut rows = dirs
        .iter()
        .map(|dir| {
            let s = Summary::load(dir)?;
            let last = s.iterations.last();
            Ok(ComparisonRow {
                rank: 0,
                agent: s.agent,
                env: s.env,
                noise_sigma: s.noise_sigma,
                auc: s.auc,
                final_mean: last.map_or(f64::NAN, |r| r.mean_return),
                final_stderr: last.map_or(f64::NAN, |r| r.stderr_return),
                seeds: s.seeds.len(),
                dir: dir.clone(),
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    rows.sort_by(|a, b| b.auc.total_cmp(&a.auc));
    for (i, r) in rows.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    Ok(rows)
}

pub fn format_table(rows: &[ComparisonRow]) -> String {
    let mut out = format!(
        "{:<4} {:<14} {:<12} {:>5} {:>12} {:>22} {:>5}  {}\n",
        "rank", "agent", "env", "noise", "auc", "final return", "seeds", "dir"
    );
    for r in rows {
        out += &format!(
            "{:<4} {:<14} {:<12} {:>5} {:>12.2} {:>22} {:>5}  {}\n",
            r.rank,
            r.agent,
            r.env,
            r.noise_sigma,
            r.auc,
            format!("{:.2} ± {:.2}", r.final_mean, r.final_stderr),
            r.seeds,
            r.dir.display()
        );
    }
    out
}
