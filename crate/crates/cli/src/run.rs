//! Multi-seed training runs and their on-disk outputs.
//!
//! An experiment directory holds:
//! - `config.toml`: the effective configuration, re-runnable as is;
//! - `seed_<s>.csv`: one metrics row per iteration, flushed as written;
//! - `agent_seed_<s>.json`: final parameters of each seed;
//! - `failed_seed_<s>.json`: parameters before a failing iteration;
//! - `summary.json`: per-iteration mean and standard error across seeds.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rpsp::io::Checkpoint;
use rpsp::optim::{IterationMetrics, Trainer};
use rpsp::Scalar;

use crate::config::{ExperimentConfig, Precision};
use crate::error::CliError;
use crate::report::Summary;

/// Metrics of one completed seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub metrics: Vec<IterationMetrics>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub dir: PathBuf,
    pub runs: Vec<SeedRun>,
    pub summary: Summary,
}

/// Called after every iteration with the seed and its metrics.
pub type Progress<'a> = &'a (dyn Fn(u64, &IterationMetrics) + Sync);

pub fn csv_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("seed_{seed}.csv"))
}

pub fn summary_path(dir: &Path) -> PathBuf {
    dir.join("summary.json")
}

/// Trains every seed, writing metrics as they are produced, then the summary.
pub fn run_experiment(config: &ExperimentConfig, progress: Progress<'_>) -> Result<ExperimentOutcome, CliError> {
    config.validate()?;
    let dir = config.output_dir.clone();
    fs::create_dir_all(&dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    fs::write(dir.join("config.toml"), config.to_toml())?;

    let n = config.seeds.len();
    let workers = match config.workers {
        0 => std::thread::available_parallelism().map_or(1, |p| p.get()),
        w => w,
    }
    .clamp(1, n);
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<SeedRun, CliError>>>> = (0..n).map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= n {
                    break;
                }
                let seed = config.seeds[i];
                let result = match config.precision {
                    Precision::F64 => run_seed::<f64>(config, seed, &dir, progress),
                    Precision::F32 => run_seed::<f32>(config, seed, &dir, progress),
                };
                *slots[i].lock().expect("result slot") = Some(result);
            });
        }
    });
    let runs = slots
        .into_iter()
        .map(|m| m.into_inner().expect("result slot").expect("every seed ran"))
        .collect::<Result<Vec<_>, _>>()?;
    let summary = Summary::from_runs(config, &runs);
    fs::write(summary_path(&dir), summary.to_json())?;
    Ok(ExperimentOutcome { dir, runs, summary })
}

fn run_seed<T: Scalar>(config: &ExperimentConfig, seed: u64, dir: &Path, progress: Progress<'_>) -> Result<SeedRun, CliError> {
    let train = config.train_config(seed)?;
    let mut trainer = Trainer::<T>::new(train).map_err(|e| match CliError::from(e) {
        CliError::Runtime(m) => CliError::Runtime(format!("seed {seed}: initialization failed: {m}")),
        config_error => config_error,
    })?;
    let path = csv_path(dir, seed);
    let mut csv = BufWriter::new(File::create(&path)?);
    writeln!(csv, "{}", IterationMetrics::CSV_HEADER)?;
    csv.flush()?;
    let mut metrics = Vec::with_capacity(config.iterations);
    for iteration in 0..config.iterations {
        let before = trainer.agent.clone();
        match trainer.step() {
            Ok(m) => {
                writeln!(csv, "{}", m.csv_row())?;
                csv.flush()?;
                progress(seed, &m);
                metrics.push(m);
            }
            Err(e) => {
                let ckpt = dir.join(format!("failed_seed_{seed}.json"));
                let saved = match Checkpoint::from_agent(&before, &config.agent, iteration).save(&ckpt) {
                    Ok(()) => format!("checkpoint saved to {}", ckpt.display()),
                    Err(save_err) => format!("checkpoint could not be saved: {save_err}"),
                };
                return Err(CliError::Runtime(format!("seed {seed}, iteration {iteration}: {e}; {saved}")));
            }
        }
    }
    Checkpoint::from_agent(&trainer.agent, &config.agent, config.iterations)
        .save(&dir.join(format!("agent_seed_{seed}.json")))
        .map_err(CliError::runtime)?;
    Ok(SeedRun { seed, metrics })
}
