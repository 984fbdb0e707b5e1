//! Experiment configuration: a flat TOML file plus command-line overrides.

use std::path::{Path, PathBuf};

use rpsp::agent::PsrInit;
use rpsp::features::FeatureConfig;
use rpsp::init2sr::InitConfig;
use rpsp::optim::{OptimConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

/// Every setting of a multi-seed experiment. Unset keys take the defaults
/// below; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: String,
    pub agent: String,
    pub seeds: Vec<u64>,
    pub iterations: usize,
    /// Minimum environment steps per training batch.
    pub batch_samples: usize,
    /// Episode horizon override; the environment default when absent.
    pub horizon: Option<usize>,
    pub learning_rate: f64,
    /// Filter step size; `learning_rate` when absent.
    pub psr_learning_rate: Option<f64>,
    pub gamma: f64,
    /// History projection dimension.
    pub d: usize,
    /// Future feature dimension `d_fo = d_fa`.
    pub d_future: usize,
    /// Future window length.
    pub k: usize,
    pub lambda: f64,
    pub a2: f64,
    pub beta: f64,
    /// TRPO trust region.
    pub epsilon: f64,
    pub noise_sigma: f64,
    /// Minimum environment steps of blind exploration for initialization.
    pub exploration_samples: usize,
    pub hidden: usize,
    pub psr_init: String,
    pub precision: Precision,
    /// Seeds run in parallel; 0 uses the available cores.
    pub workers: usize,
    pub record_wall_time: bool,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        let f = &t.init.features;
        Self {
            env: t.env,
            agent: t.agent,
            seeds: vec![0],
            iterations: t.iterations,
            batch_samples: t.batch_samples,
            horizon: None,
            learning_rate: t.optim.learning_rate,
            psr_learning_rate: t.optim.psr_learning_rate,
            gamma: t.optim.gamma,
            d: f.d,
            d_future: f.d_future,
            k: f.k,
            lambda: t.init.lambda,
            a2: t.optim.a2,
            beta: t.optim.beta,
            epsilon: t.optim.trpo_epsilon,
            noise_sigma: t.noise_sigma,
            exploration_samples: t.exploration_samples,
            hidden: t.hidden,
            psr_init: t.psr_init.name().to_string(),
            precision: Precision::F64,
            workers: 1,
            record_wall_time: false,
            output_dir: PathBuf::from("runs"),
        }
    }
}

/// Command-line values that replace file settings when present.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seeds: Option<Vec<u64>>,
    pub env: Option<String>,
    pub agent: Option<String>,
    pub iterations: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub noise_sigma: Option<f64>,
    pub learning_rate: Option<f64>,
    pub psr_learning_rate: Option<f64>,
    pub batch_samples: Option<usize>,
    pub psr_init: Option<String>,
    pub workers: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = &o.$field {
                    self.$field = v.clone();
                })*
            };
        }
        set!(seeds, env, agent, iterations, output_dir, noise_sigma, learning_rate, batch_samples, psr_init, workers);
        if o.psr_learning_rate.is_some() {
            self.psr_learning_rate = o.psr_learning_rate;
        }
    }

    pub fn init_config(&self, seed: u64) -> InitConfig {
        let mut features = FeatureConfig::with_dims(self.d, self.d_future, self.k, seed);
        features.seed = seed;
        InitConfig {
            features,
            lambda: self.lambda,
            ..InitConfig::default()
        }
    }

    /// Training settings for one seed.
    pub fn train_config(&self, seed: u64) -> Result<TrainConfig, CliError> {
        let psr_init = PsrInit::parse(&self.psr_init).map_err(CliError::from)?;
        let config = TrainConfig {
            env: self.env.clone(),
            noise_sigma: self.noise_sigma,
            horizon: self.horizon,
            agent: self.agent.clone(),
            psr_init,
            init: self.init_config(seed),
            hidden: self.hidden,
            iterations: self.iterations,
            batch_samples: self.batch_samples,
            exploration_samples: self.exploration_samples,
            optim: OptimConfig {
                learning_rate: self.learning_rate,
                psr_learning_rate: self.psr_learning_rate,
                gamma: self.gamma,
                beta: self.beta,
                a2: self.a2,
                trpo_epsilon: self.epsilon,
                ..OptimConfig::default()
            },
            seed,
            record_wall_time: self.record_wall_time,
        };
        config.validate().map_err(CliError::from)?;
        Ok(config)
    }

    /// Checks every setting before any work starts.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.seeds.is_empty() {
            return Err(CliError::Config("at least one seed is required".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(CliError::Config("seeds must be distinct".into()));
        }
        if self.iterations == 0 {
            return Err(CliError::Config("iterations must be positive".into()));
        }
        self.train_config(self.seeds[0]).map(|_| ())
    }
}
